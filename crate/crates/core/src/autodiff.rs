//! Forward-mode automatic differentiation with dual numbers.
//!
//! Every constitutive function in this crate is written once, generically over
//! [`Scalar`], and evaluated either on plain `f64` or on [`Dual`] numbers to
//! obtain exact first derivatives. Duals nest (`Dual<Dual<f64, 32>, 13>`) when
//! a derivative of a derivative is needed, e.g. the element tangent built from
//! stresses that are themselves energy gradients.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::tensor::Tensor2;

/// Largest seed dimension used for gradients of constitutive functions
/// (9 tensor components, phi, 3 gradient components, kappa are never all
/// seeded at once; 13 is the widest pass).
pub const MAX_SEED_DIM: usize = 13;

/// Real-like number supporting the elementary operations used by the
/// constitutive laws.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(v: f64) -> Self;
    /// Primal value, stripped of all derivative parts.
    fn value(&self) -> f64;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(self) -> Self;
    /// Logistic function, the derivative of [`Scalar::softplus`].
    fn sigmoid(self) -> Self;
    /// `max(self, c)`. At `self == c` the constant branch is taken, so the
    /// derivative there is zero.
    fn max_const(self, c: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn square(self) -> Self {
        self * self
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn softplus(self) -> Self {
        self.max(0.0) + (-self.abs()).exp().ln_1p()
    }
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= 0.0 {
            1.0 / (1.0 + (-self).exp())
        } else {
            let e = self.exp();
            e / (1.0 + e)
        }
    }
    #[inline]
    fn max_const(self, c: f64) -> Self {
        if self > c {
            self
        } else {
            c
        }
    }
}

/// Dual number `re + Σ eps_i ε_i` with `N` independent infinitesimal directions.
///
/// Comparisons act on the primal value only.
#[derive(Clone, Copy, Debug)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub eps: [T; N],
}

impl<T: Scalar, const N: usize> Dual<T, N> {
    /// A constant: all tangents zero.
    #[inline]
    pub fn constant(re: T) -> Self {
        Self { re, eps: [T::zero(); N] }
    }

    /// An independent variable seeded along direction `i`.
    #[inline]
    pub fn variable(re: T, i: usize) -> Self {
        let mut d = Self::constant(re);
        d.eps[i] = T::one();
        d
    }

    /// Applies a unary function given its value and derivative at `re`.
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= df;
        }
        Self { re: f, eps }
    }
}

impl<T: Scalar, const N: usize> PartialEq for Dual<T, N> {
    fn eq(&self, other: &Self) -> bool {
        self.re.value() == other.re.value()
    }
}

impl<T: Scalar, const N: usize> PartialOrd for Dual<T, N> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.re.value().partial_cmp(&other.re.value())
    }
}

impl<T: Scalar, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a += *b;
        }
        self
    }
}

impl<T: Scalar, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a -= *b;
        }
        self
    }
}

impl<T: Scalar, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [T::zero(); N];
        for i in 0..N {
            eps[i] = self.re * rhs.eps[i] + self.eps[i] * rhs.re;
        }
        Self { re: self.re * rhs.re, eps }
    }
}

impl<T: Scalar, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let re = self.re / rhs.re;
        let mut eps = [T::zero(); N];
        for i in 0..N {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) / rhs.re;
        }
        Self { re, eps }
    }
}

impl<T: Scalar, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for e in self.eps.iter_mut() {
            *e = -*e;
        }
        self
    }
}

impl<T: Scalar, const N: usize> Add<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.re = self.re + rhs;
        self
    }
}

impl<T: Scalar, const N: usize> Sub<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.re = self.re - rhs;
        self
    }
}

impl<T: Scalar, const N: usize> Mul<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        self.re = self.re * rhs;
        for e in self.eps.iter_mut() {
            *e = *e * rhs;
        }
        self
    }
}

impl<T: Scalar, const N: usize> Div<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(mut self, rhs: f64) -> Self {
        self.re = self.re / rhs;
        for e in self.eps.iter_mut() {
            *e = *e / rhs;
        }
        self
    }
}

impl<T: Scalar, const N: usize> AddAssign for Dual<T, N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Scalar, const N: usize> SubAssign for Dual<T, N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Scalar, const N: usize> MulAssign for Dual<T, N> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Scalar, const N: usize> Scalar for Dual<T, N> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re.value()
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, (s * 2.0).recip())
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        self.chain(self.re.powf(p), self.re.powf(p - 1.0) * p)
    }
    #[inline]
    fn softplus(self) -> Self {
        self.chain(self.re.softplus(), self.re.sigmoid())
    }
    #[inline]
    fn sigmoid(self) -> Self {
        let s = self.re.sigmoid();
        self.chain(s, s * (T::one() - s))
    }
    #[inline]
    fn max_const(self, c: f64) -> Self {
        if self.re.value() > c {
            self
        } else {
            Self::from_f64(c)
        }
    }
}

/// Gradient of a scalar function of a tensor, `∂f/∂T`, from one pass with
/// nine seeded directions.
pub fn grad_wrt_tensor<S, E, F>(f: F, t: &Tensor2<S>) -> Result<Tensor2<S>, E>
where
    S: Scalar,
    F: Fn(&Tensor2<Dual<S, 9>>) -> Result<Dual<S, 9>, E>,
{
    let seeded = Tensor2::from_fn(|k| Dual::variable(t.0[k], k));
    let out = f(&seeded)?;
    Ok(Tensor2(out.eps))
}

/// Value and gradient of a scalar function of `K` scalars.
pub fn value_and_grad<S, E, F, const K: usize>(f: F, x: [S; K]) -> Result<(S, [S; K]), E>
where
    S: Scalar,
    F: Fn([Dual<S, K>; K]) -> Result<Dual<S, K>, E>,
{
    let mut seeded = [Dual::constant(S::zero()); K];
    for (i, s) in seeded.iter_mut().enumerate() {
        *s = Dual::variable(x[i], i);
    }
    let out = f(seeded)?;
    Ok((out.re, out.eps))
}

/// Exact first partials of a scalar function of `K` scalars.
pub fn grad_wrt_scalars<S, E, F, const K: usize>(f: F, x: [S; K]) -> Result<[S; K], E>
where
    S: Scalar,
    F: Fn([Dual<S, K>; K]) -> Result<Dual<S, K>, E>,
{
    debug_assert!(K <= MAX_SEED_DIM);
    value_and_grad(f, x).map(|(_, g)| g)
}

/// Derivative of a univariate function.
pub fn derivative<S, E, F>(f: F, x: S) -> Result<(S, S), E>
where
    S: Scalar,
    F: Fn(Dual<S, 1>) -> Result<Dual<S, 1>, E>,
{
    let out = f(Dual::variable(x, 0))?;
    Ok((out.re, out.eps[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn product_rule() {
        let g = grad_wrt_scalars::<f64, Infallible, _, 2>(|x| Ok(x[0] * x[1]), [3.0, 4.0]).unwrap();
        assert_eq!(g, [4.0, 3.0]);
    }

    #[test]
    fn trace_gradient_is_identity() {
        let t = Tensor2([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]);
        let g = grad_wrt_tensor::<f64, Infallible, _>(|t| Ok(t.trace()), &t).unwrap();
        assert_eq!(g, Tensor2::<f64>::identity());
    }

    #[test]
    fn det_gradient_at_identity() {
        let g = grad_wrt_tensor::<f64, Infallible, _>(|t| Ok(t.det()), &Tensor2::identity()).unwrap();
        assert_eq!(g, Tensor2::<f64>::identity());
    }

    #[test]
    fn elementary_derivatives() {
        let x = 0.7_f64;
        type Unary = fn(Dual<f64, 1>) -> Dual<f64, 1>;
        let cases: [(Unary, f64); 6] = [
            (|v| v.ln(), 1.0 / x),
            (|v| v.exp(), x.exp()),
            (|v| v.sqrt(), 0.5 / x.sqrt()),
            (|v| v.powf(2.5), 2.5 * x.powf(1.5)),
            (|v| v.softplus(), x.sigmoid()),
            (|v| v.sigmoid(), x.sigmoid() * (1.0 - x.sigmoid())),
        ];
        for (f, expected) in cases {
            let (_, d) = derivative::<f64, Infallible, _>(|v| Ok(f(v)), x).unwrap();
            assert!((d - expected).abs() < 1e-14, "{d} vs {expected}");
        }
    }

    #[test]
    fn max_const_kink_has_zero_slope() {
        let (_, d) = derivative::<f64, Infallible, _>(|v| Ok(v.max_const(0.5)), 0.5).unwrap();
        assert_eq!(d, 0.0);
        let (_, d) = derivative::<f64, Infallible, _>(|v| Ok(v.max_const(0.5)), 0.6).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        // f(x) = x^3 e^x, f'' = (6x + 6x^2 + x^3) e^x
        let x = 0.3_f64;
        let inner = Dual::<f64, 1>::variable(x, 0);
        let outer = Dual::<Dual<f64, 1>, 1>::variable(inner, 0);
        let f = outer * outer * outer * outer.exp();
        let d2 = f.eps[0].eps[0];
        let expected = (6.0 * x + 6.0 * x * x + x * x * x) * x.exp();
        assert!((d2 - expected).abs() < 1e-13);
    }

    #[test]
    fn softplus_is_stable_for_large_arguments() {
        assert_eq!(800.0_f64.softplus(), 800.0);
        assert!((-800.0_f64).softplus() >= 0.0);
        assert!((0.0_f64.softplus() - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn comparisons_use_primal_value() {
        let a = Dual::<f64, 2>::variable(1.0, 0);
        let b = Dual::<f64, 2>::variable(1.0, 1);
        assert_eq!(a, b);
        assert!(Dual::<f64, 2>::constant(0.5) < a);
    }
}
