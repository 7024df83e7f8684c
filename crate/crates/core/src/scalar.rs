//! Floating-point abstraction shared by every kernel.
//!
//! Models run in `f32` by default; `f64` instantiations back the
//! finite-difference and oracle tests.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// `c = alpha * a·b + beta * c` with arbitrary row/column strides.
    ///
    /// `a` is `m×k`, `b` is `k×n`, `c` is `m×n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, strides: (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * strides.0 + (cols - 1) as isize * strides.1;
    assert!(
        strides.0 >= 0 && strides.1 >= 0 && (last as usize) < len,
        "gemm operand out of bounds"
    );
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, c_strides);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: extents of all three operands were checked above.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

pub fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x), stable for large |x|
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of softplus, used to initialize biases from a target step size.
pub fn softplus_inv<T: Scalar>(y: T) -> T {
    y + (-(-y).exp_m1()).ln()
}
