//! Dense real polynomials `Σ c_k t^k` on bounded intervals.

pub(crate) fn trim(c: &[f64]) -> &[f64] {
    let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut n = c.len();
    while n > 0 && c[n - 1].abs() <= 1e-15 * scale {
        n -= 1;
    }
    &c[..n]
}

pub(crate) fn eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * t + v)
}

pub(crate) fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

pub(crate) fn antiderivative(c: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(c.iter().enumerate().map(|(k, &v)| v / (k + 1) as f64)).collect()
}

pub(crate) fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `t ↦ p(t + s)`.
pub(crate) fn shift(c: &[f64], s: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    for (k, &v) in c.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=k {
            out[j] += v * binom * s.powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

/// Coefficients of `t ↦ p(−t)`.
pub(crate) fn reflect(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().map(|(k, &v)| if k % 2 == 1 { -v } else { v }).collect()
}

/// Real roots in `[lo, hi]`. Between consecutive critical points the
/// polynomial is monotone, so each such interval holds at most one root,
/// located by bisection.
pub(crate) fn roots_in(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trim(c);
    match c.len() {
        0 | 1 => return Vec::new(),
        2 => {
            let r = -c[0] / c[1];
            return if r >= lo && r <= hi { vec![r] } else { Vec::new() };
        }
        _ => {}
    }
    let mut knots = vec![lo];
    knots.extend(roots_in(&derivative(c), lo, hi));
    knots.push(hi);
    let mut out: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (mut fa, fb) = (eval(c, a), eval(c, b));
        if fa == 0.0 {
            out.push(a);
            continue;
        }
        if fb == 0.0 || fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = eval(c, m);
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        out.push(0.5 * (a + b));
    }
    if eval(c, hi) == 0.0 {
        out.push(hi);
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// `(min, max)` of the polynomial over `[lo, hi]`.
pub(crate) fn range(c: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut pts = vec![lo, hi];
    pts.extend(roots_in(&derivative(c), lo, hi));
    pts.iter()
        .map(|&t| eval(c, t))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_roots_and_range() {
        // (t - 1)(t + 2)(t - 0.5) = t³ + 0.5t² - 2.5t + 1
        let c = [1.0, -2.5, 0.5, 1.0];
        let r = roots_in(&c, -3.0, 3.0);
        assert_eq!(r.len(), 3);
        for (x, e) in r.iter().zip([-2.0, 0.5, 1.0]) {
            assert!((x - e).abs() < 1e-14);
        }
        let (lo, hi) = range(&[0.0, 0.0, 1.0], -1.0, 2.0);
        assert_eq!((lo, hi), (0.0, 4.0));
    }

    #[test]
    fn shift_and_reflect() {
        let c = [1.0, 2.0, 3.0];
        let s = shift(&c, 0.5);
        for t in [-1.0, 0.0, 0.3, 2.0] {
            assert!((eval(&s, t) - eval(&c, t + 0.5)).abs() < 1e-14);
            assert_eq!(eval(&reflect(&c), t), eval(&c, -t));
        }
        let a = antiderivative(&c);
        assert!((eval(&a, 1.0) - 3.0).abs() < 1e-15);
        assert_eq!(mul(&[1.0, 1.0], &[1.0, -1.0]), vec![1.0, 0.0, -1.0]);
    }
}
