//! One-dimensional building blocks with exact range, integral and cell
//! supremum oracles, and their tensor products.

use serde::{Deserialize, Serialize};
use libm::{erf, erfc};

use super::poly;
use crate::error::{Error, Result};

/// Cell suprema below this end the amalgam sum of a non-compact profile.
pub const AMALGAM_CUTOFF: f64 = 1e-14;

fn one() -> f64 {
    1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Piece `i` is `Σ_k coeffs[i][k] (x − breaks[i])^k` on
    /// `[breaks[i], breaks[i+1])`; zero outside `[breaks[0], breaks[last])`.
    Pp { breaks: Vec<f64>, coeffs: Vec<Vec<f64>> },
    /// `A·exp(−((x − c)/σ)²)`.
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        center: f64,
        sigma: f64,
    },
    /// `A·exp(−r|x − c|)`.
    Exponential {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        center: f64,
        rate: f64,
    },
    /// Cardinal B-spline of the given order, supported on `[0, order]`.
    Bspline { order: usize },
}

#[derive(Clone, Debug, PartialEq)]
struct Pp {
    breaks: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

/// A real function on `ℝ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct Profile1D {
    shape: Shape,
    pp: Option<Pp>,
}

impl TryFrom<Shape> for Profile1D {
    type Error = Error;

    fn try_from(shape: Shape) -> Result<Self> {
        let pp = match &shape {
            Shape::Pp { breaks, coeffs } => {
                if breaks.len() < 2 || coeffs.len() != breaks.len() - 1 {
                    return Err(Error::InvalidInput(format!(
                        "piecewise polynomial needs n+1 breaks for n pieces, got {} and {}",
                        breaks.len(),
                        coeffs.len()
                    )));
                }
                if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
                    return Err(Error::InvalidInput("breaks must be finite and strictly ascending".into()));
                }
                if coeffs.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("non-finite coefficient".into()));
                }
                Some(Pp { breaks: breaks.clone(), coeffs: coeffs.clone() })
            }
            Shape::Gaussian { amplitude, center, sigma } => {
                if !(*sigma > 0.0) || !amplitude.is_finite() || !center.is_finite() {
                    return Err(Error::InvalidInput("gaussian needs sigma > 0 and finite parameters".into()));
                }
                None
            }
            Shape::Exponential { amplitude, center, rate } => {
                if !(*rate > 0.0) || !amplitude.is_finite() || !center.is_finite() {
                    return Err(Error::InvalidInput("exponential needs rate > 0 and finite parameters".into()));
                }
                None
            }
            Shape::Bspline { order } => {
                if *order == 0 || *order > 12 {
                    return Err(Error::InvalidInput(format!("B-spline order must lie in 1..=12, got {order}")));
                }
                Some(bspline_pp(*order))
            }
        };
        Ok(Profile1D { shape, pp })
    }
}

impl From<Profile1D> for Shape {
    fn from(p: Profile1D) -> Self {
        p.shape
    }
}

/// Local coefficients of `B_m` on its unit pieces from the recursion
/// `B_m(x) = (x B_{m−1}(x) + (m − x) B_{m−1}(x − 1)) / (m − 1)`.
fn bspline_pp(m: usize) -> Pp {
    let mut pieces: Vec<Vec<f64>> = vec![vec![1.0]];
    for k in 2..=m {
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let mut c = vec![0.0; k];
            if let Some(p) = pieces.get(j) {
                for (i, v) in poly::mul(&[j as f64, 1.0], p).into_iter().enumerate() {
                    c[i] += v;
                }
            }
            if j >= 1 {
                for (i, v) in poly::mul(&[(k - j) as f64, -1.0], &pieces[j - 1]).into_iter().enumerate() {
                    c[i] += v;
                }
            }
            next.push(c.into_iter().map(|v| v / (k - 1) as f64).collect());
        }
        pieces = next;
    }
    Pp { breaks: (0..=m).map(|k| k as f64).collect(), coeffs: pieces }
}

/// Amalgam norm `Σ_k sup_{[k,k+1)} |f|` with a bound on any omitted tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Amalgam {
    pub value: f64,
    pub truncation_bound: f64,
}

fn extend(r: (f64, f64), v: f64) -> (f64, f64) {
    (r.0.min(v), r.1.max(v))
}

const EMPTY: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);

impl Profile1D {
    pub fn new(shape: Shape) -> Result<Self> {
        Profile1D::try_from(shape)
    }

    pub fn pp(breaks: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        Profile1D::new(Shape::Pp { breaks, coeffs })
    }

    pub fn gaussian(amplitude: f64, sigma: f64) -> Result<Self> {
        Profile1D::new(Shape::Gaussian { amplitude, center: 0.0, sigma })
    }

    pub fn exponential(amplitude: f64, rate: f64) -> Result<Self> {
        Profile1D::new(Shape::Exponential { amplitude, center: 0.0, rate })
    }

    pub fn bspline(order: usize) -> Result<Self> {
        Profile1D::new(Shape::Bspline { order })
    }

    /// `value·χ_{[a,b)}`.
    pub fn indicator(a: f64, b: f64, value: f64) -> Result<Self> {
        Profile1D::pp(vec![a, b], vec![vec![value]])
    }

    /// The linear B-spline, a hat on `[0, 2]` with peak 1 at `x = 1`.
    pub fn hat() -> Self {
        Profile1D::bspline(2).expect("order 2 is valid")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn is_piecewise_polynomial(&self) -> bool {
        self.pp.is_some()
    }

    /// Points where the profile may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match (&self.pp, &self.shape) {
            (Some(pp), _) => pp.breaks.clone(),
            (None, Shape::Gaussian { center, .. } | Shape::Exponential { center, .. }) => vec![*center],
            _ => Vec::new(),
        }
    }

    /// Monotone closed forms `A·m(|x − c|)` with `m` decreasing from 1.
    fn radial(&self) -> Option<(f64, f64, Box<dyn Fn(f64) -> f64 + '_>)> {
        match self.shape {
            Shape::Gaussian { amplitude, center, sigma } => {
                Some((amplitude, center, Box::new(move |u: f64| (-(u / sigma).powi(2)).exp())))
            }
            Shape::Exponential { amplitude, center, rate } => {
                Some((amplitude, center, Box::new(move |u: f64| (-rate * u).exp())))
            }
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if let Some(pp) = &self.pp {
            let b = &pp.breaks;
            if x < b[0] || x >= b[b.len() - 1] {
                return 0.0;
            }
            let i = b.partition_point(|&v| v <= x) - 1;
            return poly::eval(&pp.coeffs[i], x - b[i]);
        }
        let (a, c, m) = self.radial().expect("closed form");
        a * m((x - c).abs())
    }

    /// `(inf, sup)` of the values on `[a, b)`, or on `[a, b]` when `closed`.
    pub fn range(&self, a: f64, b: f64, closed: bool) -> (f64, f64) {
        if b <= a {
            let v = self.eval(a);
            return (v, v);
        }
        if let Some(pp) = &self.pp {
            let br = &pp.breaks;
            let mut r = EMPTY;
            if a < br[0] || b > br[br.len() - 1] || (closed && b == br[br.len() - 1]) {
                r = extend(r, 0.0);
            }
            for (i, c) in pp.coeffs.iter().enumerate() {
                let (lo, hi) = (a.max(br[i]), b.min(br[i + 1]));
                if lo < hi {
                    let (u, v) = poly::range(c, lo - br[i], hi - br[i]);
                    r = extend(extend(r, u), v);
                }
            }
            if closed {
                r = extend(r, self.eval(b));
            }
            return r;
        }
        let (amp, c, m) = self.radial().expect("closed form");
        let near = c.clamp(a, b);
        let far = if (a - c).abs() > (b - c).abs() { a } else { b };
        let (v1, v2) = (amp * m((near - c).abs()), amp * m((far - c).abs()));
        (v1.min(v2), v1.max(v2))
    }

    /// `sup_{x ∈ [a, b)} |f(x)|`.
    pub fn sup_abs(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.range(a, b, false);
        lo.abs().max(hi.abs())
    }

    pub fn cell_sup(&self, k: i64) -> f64 {
        self.sup_abs(k as f64, k as f64 + 1.0)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return if a == b { 0.0 } else { -self.integral(b, a) };
        }
        if let Some(pp) = &self.pp {
            let br = &pp.breaks;
            let mut s = 0.0;
            for (i, c) in pp.coeffs.iter().enumerate() {
                let (lo, hi) = (a.max(br[i]), b.min(br[i + 1]));
                if lo < hi {
                    let anti = poly::antiderivative(c);
                    s += poly::eval(&anti, hi - br[i]) - poly::eval(&anti, lo - br[i]);
                }
            }
            return s;
        }
        match self.shape {
            Shape::Gaussian { amplitude, center, sigma } => {
                let (u, v) = ((a - center) / sigma, (b - center) / sigma);
                let diff = if u >= 0.0 {
                    erfc(u) - erfc(v)
                } else if v <= 0.0 {
                    erfc(-v) - erfc(-u)
                } else {
                    erf(v) - erf(u)
                };
                amplitude * sigma * std::f64::consts::PI.sqrt() / 2.0 * diff
            }
            Shape::Exponential { amplitude, center, rate } => {
                let side = |lo: f64, hi: f64| ((-rate * lo).exp() - (-rate * hi).exp()) / rate;
                let (u, v) = (a - center, b - center);
                let s = if u >= 0.0 {
                    side(u, v)
                } else if v <= 0.0 {
                    side(-v, -u)
                } else {
                    side(0.0, v) + side(0.0, -u)
                };
                amplitude * s
            }
            _ => unreachable!("piecewise polynomial handled above"),
        }
    }

    pub fn average(&self, a: f64, b: f64) -> f64 {
        self.integral(a, b) / (b - a)
    }

    /// An interval outside of which `|f| ≤ eps`.
    pub fn extent(&self, eps: f64) -> (f64, f64) {
        if let Some(pp) = &self.pp {
            return (pp.breaks[0], pp.breaks[pp.breaks.len() - 1]);
        }
        let r = self.decay_radius(eps);
        let c = match self.shape {
            Shape::Gaussian { center, .. } | Shape::Exponential { center, .. } => center,
            _ => 0.0,
        };
        (c - r, c + r)
    }

    /// Half-width of the extent around the centre of a closed form, or the
    /// largest `|x|` in the support of a piecewise polynomial.
    pub fn decay_radius(&self, eps: f64) -> f64 {
        if let Some(pp) = &self.pp {
            return pp.breaks[0].abs().max(pp.breaks[pp.breaks.len() - 1].abs());
        }
        match self.shape {
            Shape::Gaussian { amplitude, sigma, .. } => {
                if amplitude.abs() <= eps {
                    0.0
                } else {
                    sigma * (amplitude.abs() / eps).ln().sqrt()
                }
            }
            Shape::Exponential { amplitude, rate, .. } => (amplitude.abs() / eps).ln().max(0.0) / rate,
            _ => unreachable!(),
        }
    }

    pub fn amalgam_norm(&self) -> Amalgam {
        if let Some(pp) = &self.pp {
            let k0 = pp.breaks[0].floor() as i64;
            let k1 = pp.breaks[pp.breaks.len() - 1].ceil() as i64;
            let value = (k0..k1).map(|k| self.cell_sup(k)).sum();
            return Amalgam { value, truncation_bound: 0.0 };
        }
        let c = match self.shape {
            Shape::Gaussian { center, .. } | Shape::Exponential { center, .. } => center,
            _ => unreachable!(),
        };
        // Ratio bound m(u + 1)/m(u) for u ≥ u0.
        let ratio = |u0: f64| match self.shape {
            Shape::Gaussian { sigma, .. } => (-(2.0 * u0 + 1.0) / (sigma * sigma)).exp(),
            Shape::Exponential { rate, .. } => (-rate).exp(),
            _ => unreachable!(),
        };
        let kc = c.floor() as i64;
        let mut value = self.cell_sup(kc);
        let mut bound = 0.0;
        for dir in [1i64, -1] {
            let mut k = kc + dir;
            loop {
                let s = self.cell_sup(k);
                if s < AMALGAM_CUTOFF {
                    let u = if dir > 0 { k as f64 - c } else { c - (k + 1) as f64 };
                    bound += s / (1.0 - ratio(u.max(0.0)));
                    break;
                }
                value += s;
                k += dir;
            }
        }
        Amalgam { value, truncation_bound: bound }
    }

    /// `ω_δ(f)(x) = sup_{|y| ≤ δ} |f(x + y) − f(x)|`.
    pub fn modulus(&self, delta: f64, x: f64) -> f64 {
        let (lo, hi) = self.range(x - delta, x + delta, true);
        let v = self.eval(x);
        (hi - v).max(v - lo)
    }

    /// `x ↦ f(−x)`.
    pub fn reflect(&self) -> Self {
        match (&self.pp, &self.shape) {
            (Some(pp), _) => {
                let n = pp.coeffs.len();
                let breaks: Vec<f64> = pp.breaks.iter().rev().map(|b| -b).collect();
                let coeffs = (0..n)
                    .map(|i| {
                        let src = n - 1 - i;
                        let width = pp.breaks[src + 1] - pp.breaks[src];
                        // t ↦ p(width − t) on the reflected piece.
                        poly::reflect(&poly::shift(&pp.coeffs[src], width))
                    })
                    .collect();
                Profile1D::pp(breaks, coeffs).expect("reflection keeps breaks ascending")
            }
            (None, Shape::Gaussian { amplitude, center, sigma }) => {
                Profile1D::new(Shape::Gaussian { amplitude: *amplitude, center: -center, sigma: *sigma }).unwrap()
            }
            (None, Shape::Exponential { amplitude, center, rate }) => {
                Profile1D::new(Shape::Exponential { amplitude: *amplitude, center: -center, rate: *rate }).unwrap()
            }
            _ => unreachable!(),
        }
    }

    /// `x ↦ f(x − τ)`.
    pub fn shifted(&self, tau: f64) -> Self {
        match (&self.pp, &self.shape) {
            (Some(pp), _) => Profile1D::pp(pp.breaks.iter().map(|b| b + tau).collect(), pp.coeffs.clone())
                .expect("shift keeps breaks ascending"),
            (None, Shape::Gaussian { amplitude, center, sigma }) => {
                Profile1D::new(Shape::Gaussian { amplitude: *amplitude, center: center + tau, sigma: *sigma })
                    .unwrap()
            }
            (None, Shape::Exponential { amplitude, center, rate }) => {
                Profile1D::new(Shape::Exponential { amplitude: *amplitude, center: center + tau, rate: *rate })
                    .unwrap()
            }
            _ => unreachable!(),
        }
    }

    /// `t·f`.
    pub fn scaled(&self, t: f64) -> Self {
        match (&self.pp, &self.shape) {
            (Some(pp), _) => Profile1D::pp(
                pp.breaks.clone(),
                pp.coeffs.iter().map(|c| c.iter().map(|v| v * t).collect()).collect(),
            )
            .unwrap(),
            (None, Shape::Gaussian { amplitude, center, sigma }) => {
                Profile1D::new(Shape::Gaussian { amplitude: amplitude * t, center: *center, sigma: *sigma }).unwrap()
            }
            (None, Shape::Exponential { amplitude, center, rate }) => {
                Profile1D::new(Shape::Exponential { amplitude: amplitude * t, center: *center, rate: *rate }).unwrap()
            }
            _ => unreachable!(),
        }
    }

    /// Pointwise product of two piecewise polynomials.
    pub fn product(&self, other: &Profile1D) -> Result<Self> {
        let (Some(a), Some(b)) = (&self.pp, &other.pp) else {
            return Err(Error::InvalidInput("products need piecewise polynomial factors".into()));
        };
        let lo = a.breaks[0].max(b.breaks[0]);
        let hi = a.breaks[a.breaks.len() - 1].min(b.breaks[b.breaks.len() - 1]);
        if lo >= hi {
            return Profile1D::pp(vec![0.0, 1.0], vec![vec![0.0]]);
        }
        let mut breaks: Vec<f64> =
            a.breaks.iter().chain(&b.breaks).copied().filter(|&x| x >= lo && x <= hi).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let local = |pp: &Pp, x: f64| -> Vec<f64> {
            let i = pp.breaks.partition_point(|&v| v <= x) - 1;
            poly::shift(&pp.coeffs[i], x - pp.breaks[i])
        };
        let coeffs = breaks.windows(2).map(|w| poly::mul(&local(a, w[0]), &local(b, w[0]))).collect();
        Profile1D::pp(breaks, coeffs)
    }
}

/// A tensor product `∏ f_i(x_i)`. A single factor is used on every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "TensorRepr", into = "TensorRepr")]
pub struct TensorProfile {
    factors: Vec<Profile1D>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TensorRepr {
    One(Profile1D),
    Many(Vec<Profile1D>),
}

impl From<TensorRepr> for TensorProfile {
    fn from(r: TensorRepr) -> Self {
        match r {
            TensorRepr::One(p) => TensorProfile { factors: vec![p] },
            TensorRepr::Many(v) => TensorProfile { factors: v },
        }
    }
}

impl From<TensorProfile> for TensorRepr {
    fn from(t: TensorProfile) -> Self {
        if t.factors.len() == 1 {
            TensorRepr::One(t.factors.into_iter().next().unwrap())
        } else {
            TensorRepr::Many(t.factors)
        }
    }
}

impl From<Profile1D> for TensorProfile {
    fn from(p: Profile1D) -> Self {
        TensorProfile { factors: vec![p] }
    }
}

impl TensorProfile {
    pub fn new(factors: Vec<Profile1D>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("tensor profile without factors".into()));
        }
        Ok(TensorProfile { factors })
    }

    /// Whether the profile can act on `ℝᵈ`.
    pub fn fits(&self, d: usize) -> bool {
        self.factors.len() == 1 || self.factors.len() == d
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.fits(d) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, found: self.factors.len() })
        }
    }

    pub fn factor(&self, axis: usize) -> &Profile1D {
        if self.factors.len() == 1 {
            &self.factors[0]
        } else {
            &self.factors[axis]
        }
    }

    pub fn factors(&self) -> &[Profile1D] {
        &self.factors
    }

    pub fn is_piecewise_polynomial(&self) -> bool {
        self.factors.iter().all(|f| f.is_piecewise_polynomial())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, &v)| self.factor(i).eval(v)).product()
    }

    /// Exact `(inf, sup)` over a box: the factors depend on separate
    /// coordinates, so the extremes are products of per-axis extremes.
    pub fn range(&self, lo: &[f64], hi: &[f64], closed: bool) -> (f64, f64) {
        let mut acc = (1.0, 1.0);
        for (i, (&a, &b)) in lo.iter().zip(hi).enumerate() {
            let (u, v) = self.factor(i).range(a, b, closed);
            let c = [acc.0 * u, acc.0 * v, acc.1 * u, acc.1 * v];
            acc = (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        acc
    }

    pub fn cell_sup(&self, k: &[i64]) -> f64 {
        k.iter().enumerate().map(|(i, &c)| self.factor(i).cell_sup(c)).product()
    }

    /// Average over the box `∏ [lo_i, hi_i)`.
    pub fn average(&self, lo: &[f64], hi: &[f64]) -> f64 {
        lo.iter().zip(hi).enumerate().map(|(i, (&a, &b))| self.factor(i).average(a, b)).product()
    }

    pub fn amalgam_norm(&self, d: usize) -> Amalgam {
        let parts: Vec<Amalgam> = (0..d).map(|i| self.factor(i).amalgam_norm()).collect();
        let value: f64 = parts.iter().map(|a| a.value).product();
        let upper: f64 = parts.iter().map(|a| a.value + a.truncation_bound).product();
        Amalgam { value, truncation_bound: upper - value }
    }

    /// `ω_δ(f)(x) = sup_{‖y‖∞ ≤ δ} |f(x + y) − f(x)|`.
    pub fn modulus(&self, delta: f64, x: &[f64]) -> f64 {
        let lo: Vec<f64> = x.iter().map(|v| v - delta).collect();
        let hi: Vec<f64> = x.iter().map(|v| v + delta).collect();
        let (a, b) = self.range(&lo, &hi, true);
        let v = self.eval(x);
        (b - v).max(v - a)
    }

    pub fn extent(&self, d: usize, eps: f64) -> Vec<(f64, f64)> {
        (0..d).map(|i| self.factor(i).extent(eps)).collect()
    }

    pub fn reflect(&self) -> Self {
        TensorProfile { factors: self.factors.iter().map(|f| f.reflect()).collect() }
    }
}
