//! Floating-point abstraction shared by every module.
//!
//! All geometry, stepping and spectral code is written against [`Scalar`],
//! which `f32` and `f64` satisfy. Tolerances quoted in the tests assume `f64`.
//!
//! `Scalar` pulls in both `Float` and `Signed`, which both define `abs` and
//! `signum`; call those as `Float::abs(x)` in generic code.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, Signed, ToPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Signed
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Signed
        + Default
        + Debug
        + Display
        + LowerExp
        + Sum
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline(always)]
pub fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("integer representable in scalar type")
}

#[inline(always)]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Point or vector in the plane.
pub type Vec2<T> = [T; 2];

/// General 2x2 matrix, row major.
pub type Mat2<T> = [[T; 2]; 2];

/// Symmetric 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Sym2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Scalar> Sym2<T> {
    pub fn identity() -> Self {
        Sym2 { xx: T::one(), xy: T::zero(), yy: T::one() }
    }

    pub fn zero() -> Self {
        Sym2 { xx: T::zero(), xy: T::zero(), yy: T::zero() }
    }

    pub fn to_mat(self) -> Mat2<T> {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn trace(self) -> T {
        self.xx + self.yy
    }

    pub fn det(self) -> T {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn mul_vec(self, v: Vec2<T>) -> Vec2<T> {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// `vᵀ S v`
    pub fn quad(self, v: Vec2<T>) -> T {
        v[0] * (self.xx * v[0] + self.xy * v[1]) + v[1] * (self.xy * v[0] + self.yy * v[1])
    }

    /// `uᵀ S v`
    pub fn bilinear(self, u: Vec2<T>, v: Vec2<T>) -> T {
        u[0] * (self.xx * v[0] + self.xy * v[1]) + u[1] * (self.xy * v[0] + self.yy * v[1])
    }

    pub fn scale(self, a: T) -> Self {
        Sym2 { xx: self.xx * a, xy: self.xy * a, yy: self.yy * a }
    }

    pub fn add(self, o: Self) -> Self {
        Sym2 { xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }

    pub fn frobenius(self) -> T {
        (self.xx * self.xx + lit::<T>(2.0) * self.xy * self.xy + self.yy * self.yy).sqrt()
    }
}

pub fn mat_mul<T: Scalar>(a: Mat2<T>, b: Mat2<T>) -> Mat2<T> {
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_vec<T: Scalar>(a: Mat2<T>, v: Vec2<T>) -> Vec2<T> {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn norm2<T: Scalar>(v: Vec2<T>) -> T {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

pub fn frobenius<T: Scalar>(m: Mat2<T>) -> T {
    (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
}

/// Reduces a real number to `[0, 1)`.
#[inline]
pub fn wrap_unit<T: Scalar>(x: T) -> T {
    let r = x - x.floor();
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}
