//! Two-stage inverse parameterization.
//!
//! Stage 1 filters the measured `(x, u)` and mixes the filtered regression
//! into scalar-regressor equations `z_A = φA`, `z_B = φB`. Stage 2 turns
//! those, together with the known `Γ` and `h`, into one scalar regression
//! `Y = Δθ` on the controller parameters, using only determinants and
//! adjugates of measurable quantities.

use crate::error::{Error, Result};
use crate::matrix::{adjugate, det, inverse, kron, unvec, vec, Mat};
use crate::models::{dot, PlantModel};
use crate::oracle::{sylvester_operator, IdealSolution};
use crate::wide::{common_scale, Wide};

/// `Φ̄̇ = −lΦ̄ + Φ` with `Φ = [xᵀ, u]ᵀ`.
pub fn stage1_rhs(phi_bar: &[f64], x: &[f64], u: f64, l: f64) -> Vec<f64> {
    debug_assert_eq!(phi_bar.len(), x.len() + 1);
    let n = x.len();
    (0..=n)
        .map(|i| {
            let input = if i < n { x[i] } else { u };
            -l * phi_bar[i] + input
        })
        .collect()
}

/// `z̄ = x − l·x̄` and the extended regressor `φ̄ = [Φ̄ᵀ, e^{−lt}]ᵀ`.
///
/// `t` is measured from the start of data.
pub fn stage1_outputs(phi_bar: &[f64], x: &[f64], t: f64, l: f64) -> (Vec<f64>, Vec<f64>) {
    let z_bar = x.iter().zip(phi_bar).map(|(xi, fi)| xi - l * fi).collect();
    let mut ext = phi_bar.to_vec();
    ext.push((-l * t).exp());
    (z_bar, ext)
}

/// Derivatives of the two DREM filter states
/// `H_φφ = 1/(p+k)[φ̄φ̄ᵀ]` and `H_φz = 1/(p+k)[φ̄z̄ᵀ]`.
pub fn drem_rhs(h_pp: &Mat, h_pz: &Mat, phi_bar: &[f64], z_bar: &[f64], k: f64) -> (Mat, Mat) {
    let m = phi_bar.len();
    let n = z_bar.len();
    let mut d_pp = h_pp.scale(-k);
    let mut d_pz = h_pz.scale(-k);
    for i in 0..m {
        for j in 0..m {
            d_pp[(i, j)] += phi_bar[i] * phi_bar[j];
        }
        for j in 0..n {
            d_pz[(i, j)] += phi_bar[i] * z_bar[j];
        }
    }
    (d_pp, d_pz)
}

/// `z = adj(H_φφ)·H_φz`, `φ = det(H_φφ)`.
pub fn drem_mix(h_pp: &Mat, h_pz: &Mat) -> Result<(Mat, f64)> {
    Ok((adjugate(h_pp)?.try_mul(h_pz)?, det(h_pp)?))
}

/// `det(H)/∏H_ii` for a Gram matrix `H`, in `[0, 1]`: the determinant of the
/// correlation matrix. Near zero the mixed regressor is mostly rounding error.
pub fn gram_conditioning(h: &Mat) -> Result<f64> {
    h.require_square("gram_conditioning")?;
    let n = h.rows();
    let d: Vec<f64> = (0..n).map(|i| h[(i, i)]).collect();
    if d.iter().any(|&v| !(v > 0.0)) {
        return Ok(0.0);
    }
    let mut c = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = h[(i, j)] / (d[i].sqrt() * d[j].sqrt());
        }
    }
    Ok(det(&c)?.max(0.0))
}

/// Scalar-regressor equations for the plant matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizedAB {
    /// `φA`, n×n
    pub z_a: Mat,
    /// `φB`
    pub z_b: Vec<f64>,
    pub phi: f64,
    /// `φ·x(0)`; carried for diagnostics only.
    pub z_x0: Vec<f64>,
}

/// Splits `zᵀ = φ[A B x₀]` into `z_A` and `z_B`.
pub fn extract_ab(z: &Mat, phi: f64) -> Result<ScalarizedAB> {
    let (rows, n) = z.shape();
    if rows != n + 2 {
        return Err(Error::dim(
            "extract_ab",
            format!("z must be (n+2)×n, got {rows}×{n}"),
        ));
    }
    let zt = z.transpose();
    let mut z_a = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            z_a[(i, j)] = zt[(i, j)];
        }
    }
    Ok(ScalarizedAB {
        z_a,
        z_b: zt.col(n),
        phi,
        z_x0: zt.col(n + 1),
    })
}

/// The scalar regression `Y = Δθ` together with the chain intermediates.
///
/// `y` and `delta` are mantissas on the common scale `2^scale2`: the
/// regression values are `y·2^scale2` and `delta·2^scale2`. The scale is 0
/// whenever the values fit comfortably in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPair {
    pub y: Vec<f64>,
    pub delta: f64,
    pub scale2: i32,
    pub delta_m: f64,
    pub delta_x: f64,
    pub delta_r: f64,
}

impl RegressionPair {
    pub fn zero(n: usize) -> Self {
        Self {
            y: vec![0.0; n + 1],
            delta: 0.0,
            scale2: 0,
            delta_m: 0.0,
            delta_x: 0.0,
            delta_r: 0.0,
        }
    }

    /// Multiplies `Y` and `Δ` by the same factor; `Y = Δθ` is preserved.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            y: self.y.iter().map(|v| v * factor).collect(),
            delta: self.delta * factor,
            ..self.clone()
        }
    }

    pub fn delta_wide(&self) -> Wide {
        Wide::new(self.delta, self.scale2)
    }

    pub fn y_wide(&self) -> Vec<Wide> {
        self.y.iter().map(|&v| Wide::new(v, self.scale2)).collect()
    }

    /// `Δ` as `f64`; flushes to 0 or saturates outside the `f64` range.
    pub fn delta_value(&self) -> f64 {
        self.delta_wide().to_f64()
    }

    pub fn y_values(&self) -> Vec<f64> {
        self.y_wide().iter().map(Wide::to_f64).collect()
    }
}

/// Stage-2 map with the designer's `Γ`, `Γ⁻¹` and `h` fixed.
#[derive(Debug, Clone)]
pub struct Stage2 {
    gamma: Mat,
    gamma_t_kron: Mat,
    gamma_inv: Mat,
    h: Vec<f64>,
}

impl Stage2 {
    pub fn new(gamma: &Mat, h: &[f64]) -> Result<Self> {
        let n = gamma.rows();
        if !gamma.is_square() || h.len() != n {
            return Err(Error::dim("Stage2::new", "Γ must be n×n and h of length n"));
        }
        let gamma_inv = inverse(gamma)?;
        Ok(Self {
            gamma: gamma.clone(),
            gamma_t_kron: kron(&gamma.transpose(), &Mat::identity(n)),
            gamma_inv,
            h: h.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn gamma(&self) -> &Mat {
        &self.gamma
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn parameterize(&self, ab: &ScalarizedAB) -> Result<RegressionPair> {
        let n = self.n();
        if ab.z_a.shape() != (n, n) || ab.z_b.len() != n {
            return Err(Error::dim(
                "stage2_parameterize",
                "z_A must be n×n and z_B of length n",
            ));
        }
        // The chain is homogeneous of degree q in (z_A, z_B, φ), with Δ_M of
        // degree n², Δ_x of degree n³ and Δ_r of degree n³+n²+1. Inputs are
        // normalized by an exact power of two and the scale restored at the end.
        let top = ab
            .z_a
            .as_slice()
            .iter()
            .chain(&ab.z_b)
            .chain(std::iter::once(&ab.phi))
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if top == 0.0 || !top.is_finite() {
            if top == 0.0 {
                return Ok(RegressionPair::zero(n));
            }
            return Err(Error::NonFinite("stage2_parameterize input"));
        }
        let k = -libm::frexp(top).1;
        let sc = |v: f64| libm::ldexp(v, k);
        let z_a = Mat::new(n, n, ab.z_a.as_slice().iter().map(|&v| sc(v)).collect())?;
        let z_b_vals: Vec<f64> = ab.z_b.iter().map(|&v| sc(v)).collect();
        let phi = sc(ab.phi);
        let n2 = (n * n) as i32;
        let n3 = n2 * n as i32;

        let ident = Mat::identity(n);
        let h_col = Mat::col_vec(&self.h);
        let h_row = Mat::row_vec(&self.h);
        let z_b = Mat::col_vec(&z_b_vals);

        // vec(z_B hᵀ) = Δ̄_M vec(M),  Δ̄_M = −I⊗z_A + φΓᵀ⊗I
        let dbar_m = &(-&kron(&ident, &z_a)) + &self.gamma_t_kron.scale(phi);
        let ybar_m = vec(&(&z_b * &h_row));
        let vec_y_m = &adjugate(&dbar_m)? * &ybar_m;
        let delta_m = det(&dbar_m)?;
        // Y_M = Δ_M M
        let y_m = unvec(&vec_y_m, n, n)?;

        // Δ_M h = Y_Mᵀ K_xᵀ  →  Y_x = (adj(Y_Mᵀ) Δ_M h)ᵀ = Δ_x K_x
        let dbar_x = y_m.transpose();
        let y_x = (&adjugate(&dbar_x)? * &h_col.scale(delta_m)).into_vec();
        let delta_x = det(&dbar_x)?;

        // Y_{M⁻¹} = adj(Y_M) Δ_M = Δ_{M⁻¹} M⁻¹; Δ_M is factored out of the
        // high-degree products below and applied in extended range
        let adj_y_m = adjugate(&y_m)?;
        let delta_minv = det(&y_m)?;
        let dm = Wide::from_f64(delta_m);

        // Y_r = −φ Δ_M Δ_{M⁻¹} = Δ_r K_r,   Δ_r = hᵀ Y_M Γ⁻¹ Y_{M⁻¹} z_B
        let dr_core = (&(&(&(&h_row * &y_m) * &self.gamma_inv) * &adj_y_m) * &z_b)[(0, 0)];
        let dr = Wide::from_f64(dr_core) * dm;
        let y_r = Wide::from_f64(-phi * delta_minv) * dm;

        // Ȳ = diag(Δ_x I, Δ_r) θ;  Y = adj(Δ̄) Ȳ,  Δ = Δ_xⁿ Δ_r
        // adj of a diagonal matrix: products of the other diagonal entries
        let dx = Wide::from_f64(delta_x);
        let dx_pow = dx.powi(n as u32 - 1);
        let mut vals: Vec<Wide> = y_x
            .iter()
            .map(|&v| dx_pow * dr * Wide::from_f64(v))
            .collect();
        vals.push(dx_pow * dx * y_r);
        vals.push(dx_pow * dx * dr);
        let q = regressor_exponent(n) as i32;
        let vals: Vec<Wide> = vals
            .into_iter()
            .map(|v| Wide::new(v.mant(), v.exp2().saturating_sub(q * k)))
            .collect();
        let (mut mant, scale2) = common_scale(&vals);
        let delta = mant.pop().expect("non-empty");
        Ok(RegressionPair {
            y: mant,
            delta,
            scale2,
            delta_m: libm::ldexp(delta_m, -n2 * k),
            delta_x: libm::ldexp(delta_x, -n3 * k),
            delta_r: Wide::new(dr.mant(), dr.exp2().saturating_sub((n3 + n2 + 1) * k)).to_f64(),
        })
    }
}

/// One-shot form of [`Stage2::parameterize`].
pub fn stage2_parameterize(ab: &ScalarizedAB, gamma: &Mat, h: &[f64]) -> Result<RegressionPair> {
    Stage2::new(gamma, h)?.parameterize(ab)
}

/// Exponent `q = n⁴ + n³ + n² + 1` in `Δ = C·φ^q`.
pub fn regressor_exponent(n: usize) -> u32 {
    let n = n as u32;
    n.pow(4) + n.pow(3) + n.pow(2) + 1
}

/// Constants of the structural identity `Δ = C·φ^q`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StructuralConstants {
    /// `det(−I⊗A + Γᵀ⊗I)`
    pub c1: f64,
    /// `det(M)`
    pub c2: f64,
    /// `hᵀA_Σ⁻¹B`
    pub c3: f64,
    /// `C₁^{n²+n+1} C₂^{n+1} C₃`
    pub c: f64,
    pub q: u32,
}

impl StructuralConstants {
    /// `ln|C|`, finite even when `C` itself over- or underflows.
    pub fn ln_abs_c(&self, n: usize) -> f64 {
        let n = n as f64;
        (n * n + n + 1.0) * self.c1.abs().ln() + (n + 1.0) * self.c2.abs().ln() + self.c3.abs().ln()
    }
}

/// Oracle-side constants, used only by tests and the excitation analyzer.
pub fn structural_constants(
    plant: &PlantModel,
    ideal: &IdealSolution,
    gamma: &Mat,
    h: &[f64],
) -> Result<StructuralConstants> {
    let n = plant.n();
    let c1 = det(&sylvester_operator(&plant.a, gamma))?;
    let c2 = det(&ideal.m)?;
    let w = crate::matrix::solve_linear(&ideal.a_sigma, &plant.b_col())?;
    let c3 = dot(h, w.as_slice());
    let e1 = (n * n + n + 1) as i32;
    let e2 = (n + 1) as i32;
    let c = c1.powi(e1) * c2.powi(e2) * c3;
    let sc = StructuralConstants {
        c1,
        c2,
        c3,
        c,
        q: regressor_exponent(n),
    };
    let ln_c = sc.ln_abs_c(n);
    if !ln_c.is_finite() || ln_c < (1e-12_f64).ln() {
        return Err(Error::Degenerate(format!(
            "|C| = exp({ln_c:.3}) is below 1e-12; the regression constant is degenerate"
        )));
    }
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_relative_eq;

    fn benchmark() -> (PlantModel, Mat) {
        let plant = PlantModel::new(
            Mat::from_rows(&[vec![5.0, -2.0], vec![4.0, 2.0]]).unwrap(),
            vec![0.0, 2.0],
            vec![1.0, 0.0],
            vec![0.0, -1.0],
        )
        .unwrap();
        let gamma = Mat::from_rows(&[vec![-4.0, 1.0], vec![-8.0, 0.0]]).unwrap();
        (plant, gamma)
    }

    fn exact_ab(plant: &PlantModel, phi: f64) -> ScalarizedAB {
        ScalarizedAB {
            z_a: plant.a.scale(phi),
            z_b: plant.b.iter().map(|v| v * phi).collect(),
            phi,
            z_x0: vec![0.0; plant.n()],
        }
    }

    #[test]
    fn stage1_examples() {
        assert_eq!(stage1_rhs(&[0.0; 3], &[0.0; 2], 0.0, 1.0), vec![0.0; 3]);
        // equilibrium of the lag is Φ/l
        assert_eq!(
            stage1_rhs(&[2.0, 4.0, 6.0], &[4.0, 8.0], 12.0, 2.0),
            vec![0.0; 3]
        );
        let (z, ext) = stage1_outputs(&[0.0; 3], &[0.0, -1.0], 0.0, 1.0);
        assert_eq!(z, vec![0.0, -1.0]);
        assert_eq!(ext, vec![0.0, 0.0, 0.0, 1.0]);
        let (z, _) = stage1_outputs(&[0.5, 1.0, 3.0], &[1.0, 2.0], 0.3, 2.0);
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn drem_filter_equilibrium() {
        let c = [1.0, 2.0, -1.0, 0.5];
        let zb = [3.0, -2.0];
        let k = 10.0;
        let mut pp = Mat::zeros(4, 4);
        let mut pz = Mat::zeros(4, 2);
        for i in 0..4 {
            for j in 0..4 {
                pp[(i, j)] = c[i] * c[j] / k;
            }
            for j in 0..2 {
                pz[(i, j)] = c[i] * zb[j] / k;
            }
        }
        let (dpp, dpz) = drem_rhs(&pp, &pz, &c, &zb, k);
        assert!(dpp.max_abs() < 1e-15 && dpz.max_abs() < 1e-15);
        let (dpp, _) = drem_rhs(&pp, &pz, &[0.0; 4], &[0.0; 2], k);
        assert_eq!(dpp, pp.scale(-k));
    }

    #[test]
    fn drem_mix_examples() {
        let (z, phi) = drem_mix(&Mat::zeros(4, 4), &Mat::zeros(4, 2)).unwrap();
        assert_eq!(phi, 0.0);
        assert_eq!(z, Mat::zeros(4, 2));

        // H_φz = G θ̄  →  z = det(G) θ̄
        let g = Mat::from_rows(&[
            vec![4.0, 1.0, 0.5, 0.0],
            vec![1.0, 3.0, 0.2, 0.1],
            vec![0.5, 0.2, 2.0, 0.3],
            vec![0.0, 0.1, 0.3, 1.5],
        ])
        .unwrap();
        let theta_bar = Mat::from_rows(&[
            vec![5.0, 4.0],
            vec![-2.0, 2.0],
            vec![0.0, 2.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let (z, phi) = drem_mix(&g, &(&g * &theta_bar)).unwrap();
        let d = det(&g).unwrap();
        assert_relative_eq!(phi, d, max_relative = 1e-15);
        assert!((&z - &theta_bar.scale(d)).max_abs() < 1e-12 * d);
    }

    #[test]
    fn extract_ab_examples() {
        let ab = extract_ab(&Mat::zeros(4, 2), 0.0).unwrap();
        assert_eq!(ab.z_a, Mat::zeros(2, 2));
        assert_eq!(ab.z_b, vec![0.0, 0.0]);
        // zᵀ = [A B x0] with φ = 1
        let zt = Mat::from_rows(&[vec![5.0, -2.0, 0.0, 0.0], vec![4.0, 2.0, 2.0, -1.0]]).unwrap();
        let ab = extract_ab(&zt.transpose(), 1.0).unwrap();
        assert_eq!(ab.z_a.to_rows(), vec![vec![5.0, -2.0], vec![4.0, 2.0]]);
        assert_eq!(ab.z_b, vec![0.0, 2.0]);
        assert_eq!(ab.z_x0, vec![0.0, -1.0]);
        assert!(extract_ab(&Mat::zeros(3, 2), 1.0).is_err());
    }

    #[test]
    fn stage2_zero_input() {
        let (_, gamma) = benchmark();
        let ab = ScalarizedAB {
            z_a: Mat::zeros(2, 2),
            z_b: vec![0.0; 2],
            phi: 0.0,
            z_x0: vec![0.0; 2],
        };
        let rp = stage2_parameterize(&ab, &gamma, &[1.0, 0.0]).unwrap();
        assert_eq!(rp.delta, 0.0);
        assert!(rp.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stage2_benchmark_identity() {
        let (plant, gamma) = benchmark();
        let theta = [11.25, -5.5, -2.0];
        let rp = stage2_parameterize(&exact_ab(&plant, 1.0), &gamma, &plant.h).unwrap();
        let tn = 11.25_f64;
        for (y, t) in rp.y.iter().zip(theta) {
            assert!((y - rp.delta * t).abs() <= 1e-8 * (rp.delta.abs() * tn).max(1.0));
        }
        assert!(rp.delta != 0.0);
    }

    #[test]
    fn structural_constants_benchmark() {
        let (plant, gamma) = benchmark();
        let ideal = oracle::solve(&plant, &gamma).unwrap();
        let sc = structural_constants(&plant, &ideal, &gamma, &plant.h).unwrap();
        assert_relative_eq!(sc.c3, 0.5, epsilon = 1e-14);
        assert_relative_eq!(sc.c3, -1.0 / ideal.k_r, epsilon = 1e-14);
        assert_eq!(sc.q, 29);
        let rp = stage2_parameterize(&exact_ab(&plant, 1.0), &gamma, &plant.h).unwrap();
        assert_relative_eq!(rp.delta_value(), sc.c, max_relative = 1e-9);
    }

    #[test]
    fn gram_conditioning_examples() {
        let h = Mat::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        assert!((gram_conditioning(&h).unwrap() - 1.0).abs() < 1e-15);
        let h = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(gram_conditioning(&h).unwrap() < 1e-15);
        let h = Mat::from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap();
        assert!((gram_conditioning(&h).unwrap() - 0.64).abs() < 1e-15);
        assert_eq!(gram_conditioning(&Mat::zeros(3, 3)).unwrap(), 0.0);
        // invariant under diagonal scaling
        let h = Mat::from_rows(&[vec![1e-200, 6e-201], vec![6e-201, 1e-200]]).unwrap();
        assert!((gram_conditioning(&h).unwrap() - 0.64).abs() < 1e-14);
    }

    #[test]
    fn stage2_tiny_inputs_keep_the_identity() {
        let (plant, gamma) = benchmark();
        let ideal = oracle::solve(&plant, &gamma).unwrap();
        let rp = stage2_parameterize(&exact_ab(&plant, 1e-150), &gamma, &plant.h).unwrap();
        assert!(rp.delta != 0.0);
        for (y, t) in rp.y.iter().zip(&ideal.theta_star) {
            assert!((y / rp.delta - t).abs() < 1e-9);
        }
        let sc = structural_constants(&plant, &ideal, &gamma, &plant.h).unwrap();
        let ln_pred = sc.ln_abs_c(2) + 29.0 * 1e-150f64.ln();
        assert!((rp.delta_wide().ln_abs() - ln_pred).abs() < 1e-9 * ln_pred.abs());
    }

    #[test]
    fn exponent_values() {
        assert_eq!(regressor_exponent(1), 4);
        assert_eq!(regressor_exponent(2), 29);
        assert_eq!(regressor_exponent(3), 118);
    }

    #[test]
    fn rescale_preserves_ratio() {
        let rp = RegressionPair {
            y: vec![2.0, -4.0],
            delta: 2.0,
            scale2: 0,
            delta_m: 1.0,
            delta_x: 1.0,
            delta_r: 1.0,
        };
        let s = rp.rescaled(1e10);
        assert_eq!(s.y[1] / s.delta, -2.0);
    }
}
