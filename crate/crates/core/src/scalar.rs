//! Floating-point abstraction for the numeric stack.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of tensors, parameters and model arithmetic.
///
/// Implemented for `f32` (training and inference) and `f64` (reference
/// computations such as finite-difference gradient checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tag stored in checkpoints.
    const DTYPE: &'static str;
    const BYTES: usize;

    /// `c = op(a) · op(b)` (or `c += ...` when `accumulate`) with `op(a): m×k`,
    /// `op(b): k×n` and `c: m×n`, all dense row-major. A `*_t` flag means the
    /// operand is stored transposed (`a` as `k×m`, `b` as `n×k`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, c: &mut [Self], accumulate: bool);

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every scalar type")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Below this many multiply-adds the packing done by `matrixmultiply` costs
/// more than it saves.
const SMALL_GEMM: usize = 512;

#[allow(clippy::too_many_arguments)]
fn small_gemm<T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<Output = T>>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    if !accumulate {
        c[..m * n].iter_mut().for_each(|v| *v = T::default());
    }
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = if a_t { a[p * m + i] } else { a[i * k + p] };
            if b_t {
                for (j, out) in row.iter_mut().enumerate() {
                    *out = *out + aip * b[j * k + p];
                }
            } else {
                for (out, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *out = *out + aip * *bv;
                }
            }
        }
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $gemm:path) => {
        impl Scalar for $t {
            const DTYPE: &'static str = $name;
            const BYTES: usize = std::mem::size_of::<$t>();

            #[allow(clippy::too_many_arguments)]
            fn gemm(m: usize, k: usize, n: usize, a: &[$t], a_t: bool, b: &[$t], b_t: bool, c: &mut [$t], accumulate: bool) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if !accumulate {
                        c[..m * n].iter_mut().for_each(|v| *v = 0.0);
                    }
                    return;
                }
                if m * k * n <= SMALL_GEMM {
                    small_gemm(m, k, n, a, a_t, b, b_t, c, accumulate);
                    return;
                }
                let beta = if accumulate { 1.0 } else { 0.0 };
                let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the slices hold at least m*k, k*n and m*n elements
                // (checked above) and the strides describe dense row-major
                // layouts inside them.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("caller passes exactly BYTES bytes"))
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);
