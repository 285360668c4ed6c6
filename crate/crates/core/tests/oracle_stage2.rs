use appc::matrix::char_poly;
use appc::models::PlantModel;
use appc::oracle;
use appc::param::{self, regressor_exponent, ScalarizedAB, Stage2};
use appc::Mat;
use proptest::prelude::*;

/// Companion-form `Γ` with char poly `Π(λ + p_i)`, first column carrying the
/// coefficients.
fn companion(poles: &[f64]) -> Mat {
    let n = poles.len();
    let mut c = vec![1.0];
    for p in poles {
        let mut next = vec![0.0; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] += ci * p;
        }
        c = next;
    }
    let mut g = Mat::zeros(n, n);
    for i in 0..n {
        g[(i, 0)] = -c[i + 1];
        if i + 1 < n {
            g[(i, i + 1)] = 1.0;
        }
    }
    g
}

fn plant_case(n: usize) -> impl Strategy<Value = (PlantModel, Mat)> {
    (
        prop::collection::vec(-2.0f64..2.0, n * n),
        prop_oneof![0.5f64..3.0, -3.0f64..-0.5],
        prop::collection::vec(0.5f64..6.0, n),
    )
        .prop_map(move |(w, b, poles)| {
            let rows: Vec<Vec<f64>> = w.chunks(n).map(|r| r.to_vec()).collect();
            let mut h = vec![0.0; n];
            h[0] = 1.0;
            let plant = PlantModel::strict_feedback(&rows, b, h, vec![0.0; n]).unwrap();
            (plant, companion(&poles))
        })
}

fn exact_ab(plant: &PlantModel, phi: f64) -> ScalarizedAB {
    ScalarizedAB {
        z_a: plant.a.scale(phi),
        z_b: plant.b.iter().map(|b| phi * b).collect(),
        phi,
        z_x0: vec![0.0; plant.n()],
    }
}

#[test]
fn companion_has_requested_poles() {
    let g = companion(&[2.0, 2.0]);
    assert_eq!(g.to_rows(), vec![vec![-4.0, 1.0], vec![-4.0, 0.0]]);
    assert_eq!(char_poly(&g).unwrap(), vec![1.0, 4.0, 4.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn oracle_places_the_poles((plant, gamma) in (2usize..=4).prop_flat_map(plant_case)) {
        let Ok(ideal) = oracle::solve(&plant, &gamma) else {
            // coincident spectra or an unobservable pair; not a placement case
            return Ok(());
        };
        let target = char_poly(&gamma).unwrap();
        let got = char_poly(&ideal.a_sigma).unwrap();
        let scale = 1.0 + target.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let kscale = 1.0 + ideal.k_x.iter().map(|k| k.abs()).fold(0.0, f64::max);
        for (a, b) in got.iter().zip(&target) {
            prop_assert!((a - b).abs() <= 1e-7 * scale * kscale);
        }
        // Sylvester route and coefficient matching agree
        let km = oracle::gain_by_coefficient_matching(&plant.a, &plant.b, &target).unwrap();
        for (a, b) in ideal.k_x.iter().zip(&km) {
            prop_assert!((a - b).abs() <= 1e-6 * kscale);
        }
        let r = ideal.residuals(&plant, &gamma);
        prop_assert!(r.dc_gain <= 1e-8 * kscale);
        prop_assert_eq!(ideal.theta_star.len(), plant.n() + 1);
    }

    #[test]
    fn stage2_recovers_theta((plant, gamma) in (2usize..=3).prop_flat_map(plant_case),
                             phi in prop_oneof![0.2f64..3.0, -3.0f64..-0.2]) {
        let Ok(ideal) = oracle::solve(&plant, &gamma) else { return Ok(()) };
        let Ok(sc) = param::structural_constants(&plant, &ideal, &gamma, &plant.h) else { return Ok(()) };
        let rp = Stage2::new(&gamma, &plant.h).unwrap().parameterize(&exact_ab(&plant, phi)).unwrap();
        prop_assume!(rp.delta != 0.0);
        let kscale = ideal.theta_star.iter().map(|t| t.abs()).fold(1.0, f64::max);
        for (y, t) in rp.y.iter().zip(&ideal.theta_star) {
            prop_assert!((y / rp.delta - t).abs() <= 1e-6 * kscale);
        }
        let n = plant.n();
        let ln_pred = sc.ln_abs_c(n) + regressor_exponent(n) as f64 * phi.abs().ln();
        prop_assert!((rp.delta_wide().ln_abs() - ln_pred).abs() <= 1e-6 * (1.0 + ln_pred.abs()));
    }

    #[test]
    fn stage2_is_homogeneous_of_degree_q((plant, gamma) in (2usize..=3).prop_flat_map(plant_case),
                                         k in -60i32..60,
                                         noise in prop::collection::vec(-1.0f64..1.0, 13)) {
        // arbitrary inputs, not necessarily consistent with a plant
        let n = plant.n();
        let stage2 = Stage2::new(&gamma, &plant.h).unwrap();
        let ab = ScalarizedAB {
            z_a: Mat::new(n, n, noise[..n * n].to_vec()).unwrap(),
            z_b: noise[9..9 + n].to_vec(),
            phi: noise[12] + 1.5,
            z_x0: vec![0.0; n],
        };
        let s = libm::ldexp(1.0, k);
        let scaled = ScalarizedAB {
            z_a: ab.z_a.scale(s),
            z_b: ab.z_b.iter().map(|v| v * s).collect(),
            phi: ab.phi * s,
            z_x0: ab.z_x0.clone(),
        };
        let a = stage2.parameterize(&ab).unwrap();
        let b = stage2.parameterize(&scaled).unwrap();
        let q = regressor_exponent(n) as i32;
        let da = a.delta_wide();
        let db = b.delta_wide();
        prop_assert_eq!(da.is_zero(), db.is_zero());
        if !da.is_zero() {
            prop_assert!(((db.ln_abs() - da.ln_abs()) - (q * k) as f64 * std::f64::consts::LN_2).abs() <= 1e-9 * (1.0 + da.ln_abs().abs()));
            prop_assert_eq!(da.mant().signum(), db.mant().signum());
        }
        for (ya, yb) in a.y_wide().iter().zip(b.y_wide()) {
            if !ya.is_zero() {
                prop_assert!(((yb.ln_abs() - ya.ln_abs()) - (q * k) as f64 * std::f64::consts::LN_2).abs() <= 1e-9 * (1.0 + ya.ln_abs().abs()));
            }
        }
    }
}

#[test]
fn stage2_zero_input_is_zero() {
    let gamma = companion(&[1.0, 2.0]);
    let stage2 = Stage2::new(&gamma, &[1.0, 0.0]).unwrap();
    let rp = stage2
        .parameterize(&ScalarizedAB {
            z_a: Mat::zeros(2, 2),
            z_b: vec![0.0; 2],
            phi: 0.0,
            z_x0: vec![0.0; 2],
        })
        .unwrap();
    assert_eq!(rp.delta, 0.0);
    assert!(rp.y.iter().all(|&v| v == 0.0));
}

#[test]
fn regressor_exponent_values() {
    assert_eq!(regressor_exponent(1), 4);
    assert_eq!(regressor_exponent(2), 29);
    assert_eq!(regressor_exponent(3), 118);
}

#[test]
fn shared_spectrum_is_rejected() {
    // A = Γ: every plant pole is a target pole
    let gamma = companion(&[1.0, 3.0]);
    let plant =
        PlantModel::new(gamma.clone(), vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0; 2]).unwrap();
    assert!(oracle::solve(&plant, &gamma).is_err());
    let gamma3 = companion(&[1.0, 2.0, 4.0]);
    let plant3 = PlantModel::new(
        gamma3.clone(),
        vec![0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0; 3],
    )
    .unwrap();
    assert!(oracle::solve(&plant3, &gamma3).is_err());
}
