//! Real polynomials as coefficient lists in descending powers.

/// Evaluates the polynomial at `x` (Horner).
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Routh–Hurwitz test: true iff every root has negative real part.
///
/// Requires a nonzero leading coefficient. A zero in the first column is
/// treated as "not Hurwitz" (marginal or unstable roots).
pub fn is_hurwitz(coeffs: &[f64]) -> bool {
    let coeffs = trim(coeffs);
    if coeffs.is_empty() || coeffs[0] == 0.0 {
        return false;
    }
    let sign = coeffs[0].signum();
    let c: Vec<f64> = coeffs.iter().map(|v| v * sign).collect();
    if c.iter().any(|&v| v <= 0.0) {
        return false;
    }
    let deg = c.len() - 1;
    if deg <= 2 {
        return true;
    }
    let width = deg / 2 + 1;
    let mut prev: Vec<f64> = (0..width).map(|i| *c.get(2 * i).unwrap_or(&0.0)).collect();
    let mut cur: Vec<f64> = (0..width)
        .map(|i| *c.get(2 * i + 1).unwrap_or(&0.0))
        .collect();
    for _ in 0..deg - 1 {
        if cur[0] <= 0.0 {
            return false;
        }
        let next: Vec<f64> = (0..width)
            .map(|i| {
                let a = prev.get(i + 1).copied().unwrap_or(0.0);
                let b = cur.get(i + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    cur[0] > 0.0
}

fn trim(coeffs: &[f64]) -> &[f64] {
    let start = coeffs
        .iter()
        .position(|&v| v != 0.0)
        .unwrap_or(coeffs.len());
    &coeffs[start..]
}

/// Remainder of `num / den`, both in descending powers.
fn poly_rem(num: &[f64], den: &[f64]) -> Vec<f64> {
    let mut r = num.to_vec();
    let dl = den.len();
    while r.len() >= dl {
        let f = r[0] / den[0];
        for (i, d) in den.iter().enumerate() {
            r[i] -= f * d;
        }
        r.remove(0);
    }
    r
}

/// Degree of `gcd(p, q)` by Euclid's algorithm on monic-normalized
/// remainders; a remainder whose coefficients are all below `tol` (relative
/// to the divisor) counts as zero.
pub fn gcd_degree(p: &[f64], q: &[f64], tol: f64) -> usize {
    let normalize = |v: &[f64]| -> Vec<f64> {
        let v = trim(v);
        if v.is_empty() {
            return Vec::new();
        }
        v.iter().map(|c| c / v[0]).collect()
    };
    let mut a = normalize(p);
    let mut b = normalize(q);
    if a.len() < b.len() {
        std::mem::swap(&mut a, &mut b);
    }
    loop {
        if b.is_empty() {
            return a.len().saturating_sub(1);
        }
        if b.len() == 1 {
            return 0;
        }
        let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        let r = poly_rem(&a, &b);
        let r_max = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        a = b;
        b = if r_max <= tol * scale {
            Vec::new()
        } else {
            normalize(&r)
        };
    }
}

/// True when the two polynomials share no common root (within `tol`).
pub fn coprime(p: &[f64], q: &[f64], tol: f64) -> bool {
    gcd_degree(p, q, tol) == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_checks() {
        assert!(is_hurwitz(&[1.0, 4.0, 8.0]));
        assert!(!is_hurwitz(&[1.0, -7.0, 18.0]));
        assert!(!is_hurwitz(&[1.0, 0.0, 1.0]));
        // (s+1)(s+2)(s+3)
        assert!(is_hurwitz(&[1.0, 6.0, 11.0, 6.0]));
        // s³ + s² + s + 2: roots with positive real part
        assert!(!is_hurwitz(&[1.0, 1.0, 1.0, 2.0]));
        // (s+1)^4
        assert!(is_hurwitz(&[1.0, 4.0, 6.0, 4.0, 1.0]));
        // (s-0.5)(s+1)^3 = s^4 + 2.5 s^3 + 1.5 s^2 - 0.5 s - 0.5
        assert!(!is_hurwitz(&[1.0, 2.5, 1.5, -0.5, -0.5]));
        assert!(is_hurwitz(&[2.0, 3.0]));
    }

    #[test]
    fn gcd_detects_shared_roots() {
        // (s+1)(s+2) and (s+1)(s-3)
        assert_eq!(gcd_degree(&[1.0, 3.0, 2.0], &[1.0, -2.0, -3.0], 1e-8), 1);
        assert!(coprime(&[1.0, 4.0, 8.0], &[1.0, -7.0, 18.0], 1e-8));
        assert_eq!(gcd_degree(&[1.0, 3.0, 2.0], &[2.0, 6.0, 4.0], 1e-8), 2);
    }

    #[test]
    fn horner() {
        assert_eq!(eval(&[1.0, 4.0, 8.0], -1.0), 5.0);
    }
}
