//! Forward-mode differentiation on nested dual numbers.
//!
//! Every geometric quantity in the crate is written once, generically over
//! [`Real`], and evaluated either on plain `f64` or on [`Dual`] numbers. A
//! `Dual<T>` carries a single perturbation direction; nesting
//! (`Dual<Dual<f64>>`, ...) yields higher mixed partials with no truncation
//! error. [`jet`] is the one entry point the rest of the crate uses to turn a
//! function of a point into its value plus all first partials.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::Result;

/// Scalar arithmetic shared by `f64` and every nesting level of [`Dual`].
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
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
    fn cst(v: f64) -> Self;
    /// The innermost `f64` value, with every perturbation dropped.
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    /// `self^e` for `self > 0`, through `exp(e ln self)`.
    fn powr(self, e: Self) -> Self {
        (e * self.ln()).exp()
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powr(self, e: Self) -> Self {
        self.powf(e)
    }
}

/// A first-order perturbation number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    /// A variable seeded with unit perturbation.
    pub fn var(re: T) -> Self {
        Self { re, eps: T::one() }
    }

    pub fn constant(re: T) -> Self {
        Self { re, eps: T::zero() }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let re = self.re * inv;
        Dual::new(re, (self.eps - re * o.eps) * inv)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Dual::new(self.re + o, self.eps)
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Dual::new(self.re - o, self.eps)
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        Dual::new(self.re * o, self.eps * o)
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        Dual::new(self.re / o, self.eps / o)
    }
}

impl<T: Real> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::constant(T::cst(v))
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Dual::new(r, self.eps / (r * 2.0))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.eps * e)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        Dual::new(self.re.powi(n), self.eps * self.re.powi(n - 1) * (n as f64))
    }
}

/// Value and first partials of a vector-valued function at a point.
#[derive(Clone, Debug)]
pub struct Jet<T> {
    pub value: Vec<T>,
    /// `partials[i][c]` is `∂_i f^c`.
    pub partials: Vec<Vec<T>>,
}

/// Lifts `x` into dual numbers constant in every direction.
pub fn lift<T: Real>(x: &[T]) -> Vec<Dual<T>> {
    x.iter().map(|&v| Dual::constant(v)).collect()
}

/// Evaluates `f` once per coordinate direction on seeded dual numbers.
pub fn jet<T, F>(f: F, x: &[T]) -> Result<Jet<T>>
where
    T: Real,
    F: Fn(&[Dual<T>]) -> Result<Vec<Dual<T>>>,
{
    let m = x.len();
    let mut value = Vec::new();
    let mut partials = Vec::with_capacity(m);
    let mut seeded = lift(x);
    for i in 0..m {
        seeded[i].eps = T::one();
        let out = f(&seeded)?;
        seeded[i].eps = T::zero();
        if i == 0 {
            value = out.iter().map(|d| d.re).collect();
        }
        partials.push(out.into_iter().map(|d| d.eps).collect());
    }
    if m == 0 {
        value = f(&seeded)?.into_iter().map(|d| d.re).collect();
    }
    Ok(Jet { value, partials })
}

/// Scalar specialisation of [`jet`]: value and gradient.
pub fn gradient<T, F>(f: F, x: &[T]) -> Result<(T, Vec<T>)>
where
    T: Real,
    F: Fn(&[Dual<T>]) -> Result<Dual<T>>,
{
    let j = jet(|y| Ok(vec![f(y)?]), x)?;
    Ok((j.value[0], j.partials.into_iter().map(|p| p[0]).collect()))
}

pub fn values<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(Real::value).collect()
}

pub fn consts<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&a| T::cst(a)).collect()
}
