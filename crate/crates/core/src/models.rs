//! Plant, modal model, reference model and the control law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{char_poly, det, Mat};
use crate::poly;

/// The true single-input plant `ẋ = A x + B u`, `y = hᵀx`.
///
/// Only the simulator and the oracle ever look inside; the adaptive
/// pipeline sees `x` and `u` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Mat,
    pub b: Vec<f64>,
    pub h: Vec<f64>,
    pub x0: Vec<f64>,
}

impl PlantModel {
    pub fn new(a: Mat, b: Vec<f64>, h: Vec<f64>, x0: Vec<f64>) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::dim("PlantModel", "A is not square"));
        }
        for (name, v) in [("B", &b), ("h", &h), ("x0", &x0)] {
            if v.len() != n {
                return Err(Error::dim(
                    "PlantModel",
                    format!("{name} has length {} but n = {n}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("PlantModel"));
            }
        }
        Ok(Self { a, b, h, x0 })
    }

    /// Builds the plant from strict-feedback rows `w_i` and input gain `b`.
    pub fn strict_feedback(w: &[Vec<f64>], b: f64, h: Vec<f64>, x0: Vec<f64>) -> Result<Self> {
        let (a, bv) = assemble_strict_feedback(w, b)?;
        Self::new(a, bv, h, x0)
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn b_col(&self) -> Mat {
        Mat::col_vec(&self.b)
    }

    /// `[B, AB, …, A^{n-1}B]`.
    pub fn controllability_matrix(&self) -> Mat {
        let n = self.n();
        let mut out = Mat::zeros(n, n);
        let mut col = self.b.clone();
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = col[i];
            }
            col = self.a.mul_vec(&col).expect("square A");
        }
        out
    }

    pub fn is_controllable(&self) -> bool {
        let c = self.controllability_matrix();
        let scale = c.norm_inf().powi(self.n() as i32).max(f64::MIN_POSITIVE);
        det(&c).map(|d| d.abs() > 1e-12 * scale).unwrap_or(false)
    }

    pub fn is_observable(&self) -> bool {
        observable(&self.a, &self.h)
    }

    /// Reads back `(w_i, b)` assuming strict-feedback structure; `None` when
    /// `A` lacks the unit superdiagonal or `B` is not `b·e_n`.
    pub fn strict_feedback_rows(&self) -> Option<(Vec<Vec<f64>>, f64)> {
        let n = self.n();
        if self.b[..n - 1].iter().any(|&v| v != 0.0) || self.b[n - 1] == 0.0 {
            return None;
        }
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = self.a.row(i);
            if i + 1 < n {
                row[i + 1] -= 1.0;
            }
            w.push(row);
        }
        Some((w, self.b[n - 1]))
    }

    pub fn rhs(&self, x: &[f64], u: f64) -> Result<Vec<f64>> {
        plant_rhs(x, u, self)
    }
}

/// `A` row `i` is `w_iᵀ + e_{i+1}ᵀ` for `i < n`, the last row is `w_nᵀ`,
/// and `B = b·e_n`.
pub fn assemble_strict_feedback(w: &[Vec<f64>], b: f64) -> Result<(Mat, Vec<f64>)> {
    let n = w.len();
    if n == 0 {
        return Err(Error::InvalidPlant("no state rows given".into()));
    }
    if b == 0.0 || !b.is_finite() {
        return Err(Error::InvalidPlant(format!(
            "input gain b = {b} must be nonzero"
        )));
    }
    if let Some(bad) = w.iter().position(|r| r.len() != n) {
        return Err(Error::dim(
            "assemble_strict_feedback",
            format!("w_{} has length {} but n = {n}", bad + 1, w[bad].len()),
        ));
    }
    let mut a = Mat::new(n, n, w.concat())?;
    for i in 0..n - 1 {
        a[(i, i + 1)] += 1.0;
    }
    let mut bv = vec![0.0; n];
    bv[n - 1] = b;
    Ok((a, bv))
}

pub fn plant_rhs(x: &[f64], u: f64, plant: &PlantModel) -> Result<Vec<f64>> {
    let mut dx = plant.a.mul_vec(x)?;
    for (d, b) in dx.iter_mut().zip(&plant.b) {
        *d += b * u;
    }
    Ok(dx)
}

/// Observability of `(A, hᵀ)` via the determinant of `[h, Aᵀh, …]`.
pub fn observable(a: &Mat, h: &[f64]) -> bool {
    let n = a.rows();
    let at = a.transpose();
    let mut obs = Mat::zeros(n, n);
    let mut col = h.to_vec();
    for j in 0..n {
        for i in 0..n {
            obs[(i, j)] = col[i];
        }
        col = at.mul_vec(&col).expect("square A");
    }
    let scale = obs.norm_inf().powi(n as i32).max(f64::MIN_POSITIVE);
    det(&obs).map(|d| d.abs() > 1e-12 * scale).unwrap_or(false)
}

/// Autonomous generator `χ̇ = Γχ`, `v = hᵀχ` encoding the desired poles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalModel {
    pub gamma: Mat,
    pub chi0: Vec<f64>,
}

impl ModalModel {
    pub fn new(gamma: Mat, chi0: Vec<f64>) -> Result<Self> {
        if !gamma.is_square() || gamma.rows() != chi0.len() {
            return Err(Error::dim(
                "ModalModel",
                "Γ must be n×n with chi0 of length n",
            ));
        }
        Ok(Self { gamma, chi0 })
    }

    pub fn is_hurwitz(&self) -> bool {
        char_poly(&self.gamma)
            .map(|c| poly::is_hurwitz(&c))
            .unwrap_or(false)
    }

    pub fn rhs(&self, chi: &[f64]) -> Result<Vec<f64>> {
        modal_rhs(chi, self)
    }

    pub fn output(&self, chi: &[f64], h: &[f64]) -> f64 {
        dot(h, chi)
    }
}

pub fn modal_rhs(chi: &[f64], modal: &ModalModel) -> Result<Vec<f64>> {
    modal.gamma.mul_vec(chi)
}

/// `ẋ_ref = A_Σ x_ref + B_ref r`. Built from oracle data, so it is only used
/// for error reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub a_sigma: Mat,
    pub b_ref: Vec<f64>,
    pub xref0: Vec<f64>,
}

impl ReferenceModel {
    pub fn rhs(&self, xref: &[f64], r: f64) -> Result<Vec<f64>> {
        reference_rhs(xref, r, self)
    }
}

pub fn reference_rhs(xref: &[f64], r: f64, reference: &ReferenceModel) -> Result<Vec<f64>> {
    let mut d = reference.a_sigma.mul_vec(xref)?;
    for (di, b) in d.iter_mut().zip(&reference.b_ref) {
        *di += b * r;
    }
    Ok(d)
}

/// Adjustable controller parameters `θ̂ = [K̂_x, K̂_r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub theta_hat: Vec<f64>,
}

impl ControllerParams {
    pub fn new(theta_hat: Vec<f64>) -> Result<Self> {
        match theta_hat.last() {
            None => Err(Error::Validation("θ̂ is empty".into())),
            Some(0.0) => Err(Error::Validation(
                "initial K̂_r (last entry of θ̂) must be nonzero".into(),
            )),
            Some(_) => Ok(Self { theta_hat }),
        }
    }

    pub fn k_x(&self) -> &[f64] {
        &self.theta_hat[..self.theta_hat.len() - 1]
    }

    pub fn k_r(&self) -> f64 {
        self.theta_hat[self.theta_hat.len() - 1]
    }
}

/// `ω = [xᵀ, r]ᵀ`.
pub fn regressor(x: &[f64], r: f64) -> Vec<f64> {
    let mut w = x.to_vec();
    w.push(r);
    w
}

/// `u = θ̂ᵀω`.
pub fn control_law(theta_hat: &[f64], x: &[f64], r: f64) -> f64 {
    debug_assert_eq!(theta_hat.len(), x.len() + 1);
    dot(&theta_hat[..x.len()], x) + theta_hat[x.len()] * r
}

pub fn tracking_error(x: &[f64], xref: &[f64]) -> Result<Vec<f64>> {
    if x.len() != xref.len() {
        return Err(Error::dim(
            "tracking_error",
            format!("{} vs {}", x.len(), xref.len()),
        ));
    }
    Ok(x.iter().zip(xref).map(|(a, b)| a - b).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reference input `r(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSignal {
    /// Piecewise-constant schedule of `(time, value)` breakpoints; the value
    /// before the first breakpoint is the first value.
    Steps(Vec<(f64, f64)>),
    /// `offset + amplitude · sin(2π·frequency·t)`.
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl ReferenceSignal {
    pub fn constant(value: f64) -> Self {
        ReferenceSignal::Steps(vec![(0.0, value)])
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            ReferenceSignal::Steps(points) => {
                let mut v = points.first().map_or(0.0, |p| p.1);
                for &(ti, vi) in points {
                    if t >= ti {
                        v = vi;
                    } else {
                        break;
                    }
                }
                v
            }
            ReferenceSignal::Sine {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ReferenceSignal::Steps(points) => {
                if points.is_empty() {
                    return Err(Error::Validation("reference schedule is empty".into()));
                }
                if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(Error::Validation(
                        "reference schedule has non-finite entries".into(),
                    ));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Validation(
                        "reference breakpoints must be strictly increasing in time".into(),
                    ));
                }
                Ok(())
            }
            ReferenceSignal::Sine {
                offset,
                amplitude,
                frequency,
            } => {
                if [offset, amplitude, frequency]
                    .iter()
                    .any(|v| !v.is_finite())
                {
                    return Err(Error::Validation(
                        "sine reference has non-finite entries".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark_plant() -> PlantModel {
        PlantModel::strict_feedback(
            &[vec![5.0, -3.0], vec![4.0, 2.0]],
            2.0,
            vec![1.0, 0.0],
            vec![0.0, -1.0],
        )
        .unwrap()
    }

    #[test]
    fn assemble_examples() {
        let (a, b) = assemble_strict_feedback(&[vec![0.0, 0.0], vec![0.0, 0.0]], 1.0).unwrap();
        assert_eq!(a.to_rows(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(b, vec![0.0, 1.0]);

        let p = benchmark_plant();
        assert_eq!(p.a.to_rows(), vec![vec![5.0, -2.0], vec![4.0, 2.0]]);
        assert_eq!(p.b, vec![0.0, 2.0]);

        let (a, b) = assemble_strict_feedback(&[vec![-3.0]], 0.5).unwrap();
        assert_eq!(a.to_rows(), vec![vec![-3.0]]);
        assert_eq!(b, vec![0.5]);

        assert!(matches!(
            assemble_strict_feedback(&[vec![1.0]], 0.0),
            Err(Error::InvalidPlant(_))
        ));
    }

    #[test]
    fn strict_feedback_read_back() {
        let w = vec![vec![5.0, -3.0], vec![4.0, 2.0]];
        let p = PlantModel::strict_feedback(&w, 2.0, vec![1.0, 0.0], vec![0.0; 2]).unwrap();
        assert_eq!(p.strict_feedback_rows(), Some((w, 2.0)));
    }

    #[test]
    fn plant_rhs_examples() {
        let p = benchmark_plant();
        assert_eq!(p.rhs(&[0.0, 0.0], 0.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.rhs(&[0.0, -1.0], 0.0).unwrap(), vec![2.0, -2.0]);
        assert_eq!(p.rhs(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 2.0]);
        assert!(p.rhs(&[0.0], 0.0).is_err());
    }

    #[test]
    fn controllability_of_benchmark() {
        let p = benchmark_plant();
        let c = p.controllability_matrix();
        assert_eq!(c.to_rows(), vec![vec![0.0, -4.0], vec![2.0, 4.0]]);
        assert_eq!(det(&c).unwrap(), 8.0);
        assert!(p.is_controllable());
        assert!(p.is_observable());
    }

    #[test]
    fn modal_examples() {
        let m = ModalModel::new(
            Mat::from_rows(&[vec![-4.0, 1.0], vec![-8.0, 0.0]]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        assert!(m.is_hurwitz());
        assert_eq!(m.rhs(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.rhs(&[1.0, 0.0]).unwrap(), vec![-4.0, -8.0]);
        assert_eq!(m.output(&[3.0, 7.0], &[1.0, 0.0]), 3.0);
        assert!(observable(&m.gamma, &[1.0, 0.0]));
    }

    #[test]
    fn reference_equilibrium() {
        let r = ReferenceModel {
            a_sigma: Mat::from_rows(&[vec![5.0, -2.0], vec![26.5, -9.0]]).unwrap(),
            b_ref: vec![0.0, -4.0],
            xref0: vec![0.0, 0.0],
        };
        assert_eq!(r.rhs(&[1.0, 2.5], 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn control_law_examples() {
        assert_eq!(control_law(&[0.0; 3], &[1.0, 2.0], 1.0), 0.0);
        assert_eq!(control_law(&[0.0, 0.0, 2.0], &[7.0, -3.0], 1.0), 2.0);
        assert_eq!(control_law(&[11.25, -5.5, -2.0], &[1.0, 2.5], 1.0), -4.5);
    }

    #[test]
    fn tracking_error_examples() {
        assert_eq!(
            tracking_error(&[1.0, 0.0], &[1.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            tracking_error(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            vec![1.0, -1.0]
        );
        assert!(tracking_error(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn controller_params_require_nonzero_kr() {
        assert!(ControllerParams::new(vec![0.0, 0.0, 0.0]).is_err());
        let c = ControllerParams::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c.k_x(), &[1.0, 2.0]);
        assert_eq!(c.k_r(), 3.0);
    }

    #[test]
    fn reference_signal_schedule() {
        let s = ReferenceSignal::Steps(vec![(0.0, 1.0), (2.0, -1.0)]);
        assert_eq!(s.value(0.0), 1.0);
        assert_eq!(s.value(1.999), 1.0);
        assert_eq!(s.value(2.0), -1.0);
        assert!(ReferenceSignal::Steps(vec![(1.0, 0.0), (1.0, 2.0)])
            .validate()
            .is_err());
        let sine = ReferenceSignal::Sine {
            offset: 1.0,
            amplitude: 2.0,
            frequency: 0.25,
        };
        assert!((sine.value(1.0) - 3.0).abs() < 1e-12);
    }
}
