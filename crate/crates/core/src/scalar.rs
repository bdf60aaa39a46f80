//! Scalar abstraction for the kernel arithmetic.
//!
//! Grid storage and the stencil arithmetic are generic over [`Scalar`] so the
//! same code path runs on `f64` (the production type), `f32`, and the
//! operation-counting [`Counted`] wrapper used to audit the flop budget.

use std::cell::Cell;
use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_traits::Zero;

/// Numeric type the advection kernel can run on.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from a double; used for coefficients and generated inputs.
    fn from_f64(value: f64) -> Self;

    fn to_f64(self) -> f64;

    /// Bit-level identity (distinguishes `0.0` from `-0.0`).
    fn bit_eq(self, other: Self) -> bool;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(value: f64) -> Self {
        value
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn bit_eq(self, other: Self) -> bool {
        self.to_bits() == other.to_bits()
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    #[inline]
    fn bit_eq(self, other: Self) -> bool {
        self.to_bits() == other.to_bits()
    }
}

thread_local! {
    static ADDSUB: Cell<u64> = const { Cell::new(0) };
    static MUL: Cell<u64> = const { Cell::new(0) };
}

/// Floating-point operation tallies recorded by [`Counted`] on this thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpTally {
    pub addsub: u64,
    pub mul: u64,
}

impl OpTally {
    pub fn total(&self) -> u64 {
        self.addsub + self.mul
    }
}

/// Scalar wrapper that counts every add, subtract and multiply it performs.
///
/// Counts accumulate in thread-local storage; bracket a computation with
/// [`Counted::reset`] and [`Counted::tally`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Counted<T>(pub T);

impl<T> Counted<T> {
    pub fn reset() {
        ADDSUB.with(|c| c.set(0));
        MUL.with(|c| c.set(0));
    }

    pub fn tally() -> OpTally {
        OpTally {
            addsub: ADDSUB.with(Cell::get),
            mul: MUL.with(Cell::get),
        }
    }
}

impl<T: Add<Output = T>> Add for Counted<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        ADDSUB.with(|c| c.set(c.get() + 1));
        Counted(self.0 + rhs.0)
    }
}

impl<T: Sub<Output = T>> Sub for Counted<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        ADDSUB.with(|c| c.set(c.get() + 1));
        Counted(self.0 - rhs.0)
    }
}

impl<T: Mul<Output = T>> Mul for Counted<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        MUL.with(|c| c.set(c.get() + 1));
        Counted(self.0 * rhs.0)
    }
}

// `Zero` needs `Add`; the identity itself is not an operation and `is_zero`
// never touches the counters.
impl<T: Scalar> Zero for Counted<T> {
    fn zero() -> Self {
        Counted(T::zero())
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl<T: Scalar> Scalar for Counted<T> {
    fn from_f64(value: f64) -> Self {
        Counted(T::from_f64(value))
    }

    fn to_f64(self) -> f64 {
        self.0.to_f64()
    }

    fn bit_eq(self, other: Self) -> bool {
        self.0.bit_eq(other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counted_tallies_each_operation() {
        Counted::<f64>::reset();
        let a = Counted(2.0f64);
        let b = Counted(3.0f64);
        let c = (a + b) * b - a;
        assert_eq!(c.0, 13.0);
        assert_eq!(Counted::<f64>::tally(), OpTally { addsub: 2, mul: 1 });
        let _ = Counted::<f64>::zero();
        assert_eq!(Counted::<f64>::tally().total(), 3);
    }

    #[test]
    fn bit_eq_separates_signed_zero() {
        assert!(!0.0f64.bit_eq(-0.0));
        assert!(1.5f32.bit_eq(1.5));
    }
}
