//! Fully convolutional encoder-decoder.
//!
//! Layers are strided same-padded convolutions and their exact adjoints
//! (transpose convolutions), each followed by a pointwise nonlinearity. The
//! network is generic over [`Real`] so gradient checks can run in `f64` while
//! training runs in `f32`.

mod conv;
mod model;
mod spec;

pub use model::{build_model, ForwardCache, Gradients, LayerParams, Model};
pub use spec::{Activation, LayerKind, LayerSpec, ModelSpec};

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of a network.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Default + Debug + Send + Sync + 'static
{
    /// `C ← α·A·B + β·C` on strided row/column-major views.
    ///
    /// # Safety
    /// Every element addressed by the shapes and strides must be in bounds
    /// of its buffer; when `beta` is zero `c` need not be initialized.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A strided matrix view: element (r, c) is `data[r·rs + c·cs]`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, T> {
    pub data: &'a [T],
    pub rs: usize,
    pub cs: usize,
}

pub(crate) struct ViewMut<'a, T> {
    pub data: &'a mut [T],
    pub rs: usize,
    pub cs: usize,
}

fn last_index(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    (rows - 1) * rs + (cols - 1) * cs
}

/// Bounds-checked `C ← α·A·B + β·C` for `A: m×k`, `B: k×n`, `C: m×n`.
pub(crate) fn gemm<T: Real>(m: usize, k: usize, n: usize, alpha: T, a: View<T>, b: View<T>, beta: T, c: ViewMut<T>) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.data.len() > last_index(m, n, c.rs, c.cs), "gemm: C out of bounds");
    if k == 0 {
        for r in 0..m {
            for col in 0..n {
                let v = &mut c.data[r * c.rs + col * c.cs];
                *v = beta * *v;
            }
        }
        return;
    }
    assert!(a.data.len() > last_index(m, k, a.rs, a.cs), "gemm: A out of bounds");
    assert!(b.data.len() > last_index(k, n, b.rs, b.cs), "gemm: B out of bounds");
    // SAFETY: the assertions above cover every addressed element.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        )
    }
}
