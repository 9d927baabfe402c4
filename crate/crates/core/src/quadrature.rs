//! Gauss–Legendre quadrature of order 8 with interval bisection.

use crate::error::{Error, Result};

const NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

const MAX_DEPTH: u32 = 40;

/// Eight-point rule on `[a, b]`, exact for polynomials of degree at most 15.
pub fn gl8(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    let mut s = 0.0;
    for (x, w) in NODES.iter().zip(WEIGHTS) {
        s += w * (f(mid - half * x) + f(mid + half * x));
    }
    s * half
}

/// Bisects until the rule on an interval agrees with the sum over its halves
/// to within `tol · max(1, |value|)`.
pub fn adaptive_gl8(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn go(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
        let m = (a + b) / 2.0;
        let (l, r) = (gl8(f, a, m), gl8(f, m, b));
        if (l + r - whole).abs() <= tol * (l + r).abs().max(1.0) {
            return Ok(l + r);
        }
        if depth == 0 || m <= a || m >= b {
            return Err(Error::Quadrature { a, b });
        }
        Ok(go(f, a, m, l, tol / 2.0, depth - 1)? + go(f, m, b, r, tol / 2.0, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    go(f, a, b, gl8(f, a, b), tol, MAX_DEPTH)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        assert!((WEIGHTS.iter().sum::<f64>() * 2.0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_degree_fifteen() {
        let v = gl8(|x| x.powi(15) + x.powi(14), -1.0, 2.0);
        let exact = (2f64.powi(16) - 1.0) / 16.0 + (2f64.powi(15) + 1.0) / 15.0;
        assert!((v - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn adaptive_gaussian() {
        let v = adaptive_gl8(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-13).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }
}
