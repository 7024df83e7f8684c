//! Row-major sequence-level linear algebra helpers.

use crate::scalar::Scalar;

/// `y[l] = W · x[l]` for every row; `x` is `rows×d_in`, `w` is `d_out×d_in`.
pub fn linear<T: Scalar>(x: &[T], rows: usize, d_in: usize, w: &[T], d_out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); rows * d_out];
    linear_into(x, rows, d_in, w, d_out, &mut y);
    y
}

pub fn linear_into<T: Scalar>(
    x: &[T],
    rows: usize,
    d_in: usize,
    w: &[T],
    d_out: usize,
    y: &mut [T],
) {
    debug_assert_eq!(x.len(), rows * d_in);
    debug_assert_eq!(w.len(), d_out * d_in);
    debug_assert_eq!(y.len(), rows * d_out);
    T::gemm(
        rows,
        d_in,
        d_out,
        T::one(),
        x,
        (d_in as isize, 1),
        w,
        (1, d_in as isize),
        T::zero(),
        y,
        (d_out as isize, 1),
    );
}

/// Backward of [`linear`]: accumulates `dW += dYᵀ·X` and returns `dX = dY·W`.
pub fn linear_backward<T: Scalar>(
    x: &[T],
    rows: usize,
    d_in: usize,
    w: &[T],
    d_out: usize,
    dy: &[T],
    dw: &mut [T],
) -> Vec<T> {
    let mut dx = vec![T::zero(); rows * d_in];
    linear_backward_acc(x, rows, d_in, w, d_out, dy, dw, &mut dx);
    dx
}

/// As [`linear_backward`] but accumulates into an existing `dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward_acc<T: Scalar>(
    x: &[T],
    rows: usize,
    d_in: usize,
    w: &[T],
    d_out: usize,
    dy: &[T],
    dw: &mut [T],
    dx: &mut [T],
) {
    debug_assert_eq!(dy.len(), rows * d_out);
    // dW (d_out×d_in) += dYᵀ (d_out×rows) · X (rows×d_in)
    T::gemm(
        d_out,
        rows,
        d_in,
        T::one(),
        dy,
        (1, d_out as isize),
        x,
        (d_in as isize, 1),
        T::one(),
        dw,
        (d_in as isize, 1),
    );
    // dX (rows×d_in) += dY (rows×d_out) · W (d_out×d_in)
    T::gemm(
        rows,
        d_out,
        d_in,
        T::one(),
        dy,
        (d_out as isize, 1),
        w,
        (d_in as isize, 1),
        T::one(),
        dx,
        (d_in as isize, 1),
    );
}

/// Matrix-vector product `W·x` for a single row.
pub fn matvec<T: Scalar>(w: &[T], d_out: usize, x: &[T]) -> Vec<T> {
    let d_in = x.len();
    debug_assert_eq!(w.len(), d_out * d_in);
    w.chunks_exact(d_in).map(|row| dot(row, x)).collect()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn add_assign<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

/// Column `col` of a row-major `rows×cols` matrix pulled into a new vector.
pub fn column<T: Scalar>(m: &[T], rows: usize, cols: usize, col: usize) -> Vec<T> {
    (0..rows).map(|r| m[r * cols + col]).collect()
}

/// Copy the column block `[start, start+width)` out of a `rows×cols` matrix.
pub fn split_cols<T: Scalar>(
    m: &[T],
    rows: usize,
    cols: usize,
    start: usize,
    width: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        out.extend_from_slice(&m[r * cols + start..r * cols + start + width]);
    }
    out
}

/// Inverse of [`split_cols`]: write `block` into columns `[start, start+width)`.
pub fn write_cols<T: Scalar>(
    m: &mut [T],
    rows: usize,
    cols: usize,
    start: usize,
    width: usize,
    block: &[T],
) {
    for r in 0..rows {
        m[r * cols + start..r * cols + start + width]
            .copy_from_slice(&block[r * width..(r + 1) * width]);
    }
}
