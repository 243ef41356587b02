use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Real;

/// Forward-mode number carrying `N` directional derivatives.
///
/// `T` is itself any [`Real`], so duals nest: `Dual<Dual<f64, 3>, 3>` carries
/// second spatial derivatives, and `Dual<Dual<Var, 3>, 1>` runs forward sweeps
/// on top of the reverse tape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub eps: [T; N],
}

impl<T: Real, const N: usize> Dual<T, N> {
    #[inline]
    pub fn constant(re: T) -> Self {
        Self {
            re,
            eps: [T::zero(); N],
        }
    }

    /// Independent variable seeded along basis direction `i`.
    #[inline]
    pub fn variable(re: T, i: usize) -> Self {
        let mut eps = [T::zero(); N];
        eps[i] = T::one();
        Self { re, eps }
    }

    #[inline]
    pub fn new(re: T, eps: [T; N]) -> Self {
        Self { re, eps }
    }

    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= df;
        }
        Self { re: f, eps }
    }
}

impl<T: Real, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e += *r;
        }
        Self {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e -= *r;
        }
        Self {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e = *e * rhs.re + self.re * *r;
        }
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re;
        let inv = rhs.re.recip();
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e = (*e - q * *r) * inv;
        }
        Self { re: q, eps }
    }
}

impl<T: Real, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = -*e;
        }
        Self { re: -self.re, eps }
    }
}

impl<T: Real, const N: usize> Add<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self {
            re: self.re + rhs,
            eps: self.eps,
        }
    }
}

impl<T: Real, const N: usize> Sub<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self {
            re: self.re - rhs,
            eps: self.eps,
        }
    }
}

impl<T: Real, const N: usize> Mul<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e * rhs;
        }
        Self {
            re: self.re * rhs,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Div<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e / rhs;
        }
        Self {
            re: self.re / rhs,
            eps,
        }
    }
}

impl<T: Real, const N: usize> AddAssign for Dual<T, N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real, const N: usize> SubAssign for Dual<T, N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real, const N: usize> MulAssign for Dual<T, N> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Real, const N: usize> Real for Dual<T, N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re.value()
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        let d = self.re.recip();
        self.chain(self.re.ln(), d)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, -(t * t) + 1.0)
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, s.recip() * 0.5)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        let v = self.re.powf(p);
        let d = self.re.powf(p - 1.0) * p;
        self.chain(v, d)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let v = self.re.powi(n);
        let d = self.re.powi(n - 1) * (n as f64);
        self.chain(v, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D1 = Dual<f64, 1>;
    type D2 = Dual<D1, 1>;

    #[test]
    fn square_rule() {
        let x = D1::variable(3.0, 0);
        assert_eq!((x * x).eps[0], 6.0);
    }

    #[test]
    fn tanh_slope_at_origin() {
        let x = D1::variable(0.0, 0);
        assert_eq!(x.tanh().eps[0], 1.0);
    }

    #[test]
    fn nested_second_derivative_of_exp() {
        let x = D2::new(D1::variable(0.0, 0), [D1::constant(1.0)]);
        let y = x.exp();
        assert_eq!(y.eps[0].eps[0], 1.0);
    }

    #[test]
    fn value_channel_is_bit_exact() {
        let a = 0.731_f64;
        let b = 1.917_f64;
        let plain = ((a * b).tanh() + (a / b).exp()).sqrt().powf(1.3) - a.sin() * b.cos();
        let da = D1::variable(a, 0);
        let db = D1::constant(b);
        let dual = ((da * db).tanh() + (da / db).exp()).sqrt().powf(1.3) - da.sin() * db.cos();
        assert_eq!(plain.to_bits(), dual.re.to_bits());
    }

    proptest::proptest! {
        #[test]
        fn mixed_partials_commute(x in -2.0..2.0f64, y in -2.0..2.0f64) {
            type D2 = Dual<Dual<f64, 2>, 2>;
            let var = |v: f64, i: usize| D2::variable(Dual::variable(v, i), i);
            let (a, b) = (var(x, 0), var(y, 1));
            let f = (a * b).sin() + a.exp() * b.powi(3) + (a * a + b * b + 1.0).ln() * b.tanh();
            proptest::prop_assert!((f.eps[0].eps[1] - f.eps[1].eps[0]).abs() < 1e-10);
            proptest::prop_assert_eq!(f.re.re, (x * y).sin() + x.exp() * y.powi(3) + (x * x + y * y + 1.0).ln() * y.tanh());
        }
    }
}
