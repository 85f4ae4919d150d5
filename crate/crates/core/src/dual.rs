//! Forward-mode dual numbers carrying one directional derivative.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// A value together with its derivative along a single seed direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub deriv: f64,
}

impl Dual {
    #[inline]
    pub const fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }

    /// A constant: zero derivative.
    #[inline]
    pub const fn constant(value: f64) -> Self {
        Self { value, deriv: 0.0 }
    }

    #[inline]
    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        Self::new(s, c * self.deriv)
    }

    #[inline]
    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        Self::new(c, -s * self.deriv)
    }

    #[inline]
    pub fn tan(self) -> Self {
        let t = self.value.tan();
        Self::new(t, (1.0 + t * t) * self.deriv)
    }

    #[inline]
    pub fn exp(self) -> Self {
        let e = self.value.exp();
        Self::new(e, e * self.deriv)
    }

    /// Natural logarithm. Callers are responsible for the domain check.
    #[inline]
    pub fn ln(self) -> Self {
        Self::new(self.value.ln(), self.deriv / self.value)
    }

    #[inline]
    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        let d = if self.deriv == 0.0 { 0.0 } else { self.deriv / (2.0 * r) };
        Self::new(r, d)
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.value > 0.0 {
            self
        } else if self.value < 0.0 {
            -self
        } else {
            Self::new(0.0, 0.0)
        }
    }

    /// `atan2(self, x)` with `self` as the ordinate.
    #[inline]
    pub fn atan2(self, x: Self) -> Self {
        let r2 = x.value * x.value + self.value * self.value;
        Self::new(
            self.value.atan2(x.value),
            (x.value * self.deriv - self.value * x.deriv) / r2,
        )
    }

    /// Real power with a constant exponent.
    #[inline]
    pub fn powf(self, p: f64) -> Self {
        let v = self.value.powf(p);
        let d = if self.deriv == 0.0 {
            0.0
        } else if p == 1.0 {
            self.deriv
        } else {
            p * self.value.powf(p - 1.0) * self.deriv
        };
        Self::new(v, d)
    }

    /// General power `self^e` where both sides may carry derivatives.
    /// Requires a positive base when the exponent varies.
    #[inline]
    pub fn pow(self, e: Self) -> Self {
        if e.deriv == 0.0 {
            return self.powf(e.value);
        }
        let v = self.value.powf(e.value);
        let d = v * (e.deriv * self.value.ln() + e.value * self.deriv / self.value);
        Self::new(v, d)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.value.is_finite() && self.deriv.is_finite()
    }
}

impl From<f64> for Dual {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.value + o.value, self.deriv + o.deriv)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.value - o.value, self.deriv - o.deriv)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.value * o.value, self.deriv * o.value + self.value * o.deriv)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let q = self.value / o.value;
        Dual::new(q, (self.deriv - q * o.deriv) / o.value)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.value, -self.deriv)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: f64) -> Dual {
        Dual::new(self.value + o, self.deriv)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: f64) -> Dual {
        Dual::new(self.value - o, self.deriv)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: f64) -> Dual {
        Dual::new(self.value * o, self.deriv * o)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: f64) -> Dual {
        Dual::new(self.value / o, self.deriv / o)
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        o * self
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        *self = *self + o;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        *self = *self - o;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}
