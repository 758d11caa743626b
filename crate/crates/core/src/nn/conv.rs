//! Strided convolution and its adjoint via im2col / col2im and GEMM.
//!
//! Tensors are single samples laid out `[channel][i][j]`. A convolution maps
//! a fine `n×n` input to a coarse `⌈n/s⌉×⌈n/s⌉` output; output pixel `o`
//! reads input pixels `o·s − pad + t` for taps `t ∈ [0, k)`, with zeros
//! outside the image. The transpose convolution is the exact adjoint of that
//! map, so it turns an `m×m` input into an `m·s×m·s` output.
//!
//! Column buffers are built in bands of coarse rows to bound memory on large
//! images.

use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, Real, View, ViewMut};

/// Upper bound on column-buffer elements per band.
const BAND_ELEMENTS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub fine: usize,
    pub coarse: usize,
}

impl Geometry {
    pub fn new(fine: usize, kernel: usize, stride: usize) -> Self {
        let coarse = fine.div_ceil(stride);
        let pad = ((coarse - 1) * stride + kernel).saturating_sub(fine) / 2;
        Geometry {
            kernel,
            stride,
            pad,
            fine,
            coarse,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    /// Input index for output index `o` and tap `t`, if inside the image.
    #[inline]
    fn source(&self, o: usize, t: usize) -> Option<usize> {
        let idx = (o * self.stride + t) as isize - self.pad as isize;
        if idx >= 0 && (idx as usize) < self.fine {
            Some(idx as usize)
        } else {
            None
        }
    }

    fn band_rows(&self, channels: usize) -> usize {
        let per_row = channels * self.kernel * self.kernel * self.coarse;
        (BAND_ELEMENTS / per_row.max(1)).clamp(1, self.coarse)
    }

    fn bands(&self, channels: usize) -> impl Iterator<Item = (usize, usize)> {
        let rows = self.band_rows(channels);
        let coarse = self.coarse;
        (0..coarse).step_by(rows).map(move |r0| (r0, (r0 + rows).min(coarse)))
    }
}

/// Gathers fine-image patches for coarse rows `[r0, r1)` into `cols`, shaped
/// `(C·k·k) × ((r1 − r0)·coarse)`.
fn im2col<T: Real>(x: &[T], channels: usize, g: &Geometry, r0: usize, r1: usize, cols: &mut [T]) {
    let (k, n, m) = (g.kernel, g.fine, g.coarse);
    let width = (r1 - r0) * m;
    for c in 0..channels {
        let plane = &x[c * n * n..(c + 1) * n * n];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * width;
                let dst = &mut cols[row..row + width];
                for (band_r, oi) in (r0..r1).enumerate() {
                    let out = &mut dst[band_r * m..(band_r + 1) * m];
                    match g.source(oi, ki) {
                        None => out.fill(T::zero()),
                        Some(ii) => {
                            let src = &plane[ii * n..(ii + 1) * n];
                            for (oj, v) in out.iter_mut().enumerate() {
                                *v = match g.source(oj, kj) {
                                    Some(jj) => src[jj],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds `cols` back into the fine image.
fn col2im_add<T: Real>(cols: &[T], channels: usize, g: &Geometry, r0: usize, r1: usize, x: &mut [T]) {
    let (k, n, m) = (g.kernel, g.fine, g.coarse);
    let width = (r1 - r0) * m;
    for c in 0..channels {
        let plane = &mut x[c * n * n..(c + 1) * n * n];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * width;
                let src = &cols[row..row + width];
                for (band_r, oi) in (r0..r1).enumerate() {
                    let Some(ii) = g.source(oi, ki) else { continue };
                    let dst = &mut plane[ii * n..(ii + 1) * n];
                    for (oj, &v) in src[band_r * m..(band_r + 1) * m].iter().enumerate() {
                        if let Some(jj) = g.source(oj, kj) {
                            dst[jj] += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(y: &mut [T], bias: &[T], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        for v in &mut y[c * plane..(c + 1) * plane] {
            *v += b;
        }
    }
}

fn accumulate_bias_grad<T: Real>(dy: &[T], db: &mut [T], plane: usize) {
    for (c, g) in db.iter_mut().enumerate() {
        *g += dy[c * plane..(c + 1) * plane].iter().copied().sum::<T>();
    }
}

/// Convolution forward. `weight` is `[cout][cin][k][k]`; input is fine.
pub(crate) fn conv_forward<T: Real>(x: &[T], cin: usize, weight: &[T], bias: &[T], g: &Geometry) -> Vec<T> {
    let cout = bias.len();
    let ckk = cin * g.kernel * g.kernel;
    let plane = g.coarse * g.coarse;
    let mut y = vec![T::zero(); cout * plane];
    let w = View { data: weight, rs: ckk, cs: 1 };
    if g.is_pointwise() {
        gemm(cout, cin, plane, T::one(), w, View { data: x, rs: plane, cs: 1 }, T::zero(), ViewMut { data: &mut y, rs: plane, cs: 1 });
    } else {
        let mut cols = Vec::new();
        for (r0, r1) in g.bands(cin) {
            let width = (r1 - r0) * g.coarse;
            cols.resize(ckk * width, T::zero());
            im2col(x, cin, g, r0, r1, &mut cols);
            let out = ViewMut { data: &mut y[r0 * g.coarse..], rs: plane, cs: 1 };
            gemm(cout, ckk, width, T::one(), w, View { data: &cols, rs: width, cs: 1 }, T::zero(), out);
        }
    }
    add_bias(&mut y, bias, plane);
    y
}

/// Convolution backward. Accumulates into `dw`, `db`; returns the input
/// gradient when `want_dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    x: &[T],
    cin: usize,
    weight: &[T],
    dy: &[T],
    g: &Geometry,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    let cout = db.len();
    let ckk = cin * g.kernel * g.kernel;
    let plane = g.coarse * g.coarse;
    accumulate_bias_grad(dy, db, plane);
    let mut dx = want_dx.then(|| vec![T::zero(); cin * g.fine * g.fine]);
    if g.is_pointwise() {
        gemm(cout, plane, cin, T::one(), View { data: dy, rs: plane, cs: 1 }, View { data: x, rs: 1, cs: plane }, T::one(), ViewMut { data: dw, rs: ckk, cs: 1 });
        if let Some(dx) = dx.as_mut() {
            gemm(cin, cout, plane, T::one(), View { data: weight, rs: 1, cs: ckk }, View { data: dy, rs: plane, cs: 1 }, T::zero(), ViewMut { data: dx, rs: plane, cs: 1 });
        }
        return dx;
    }
    let mut cols = Vec::new();
    let mut dcols = Vec::new();
    for (r0, r1) in g.bands(cin) {
        let width = (r1 - r0) * g.coarse;
        cols.resize(ckk * width, T::zero());
        im2col(x, cin, g, r0, r1, &mut cols);
        let dy_band = View { data: &dy[r0 * g.coarse..], rs: plane, cs: 1 };
        gemm(cout, width, ckk, T::one(), dy_band, View { data: &cols, rs: 1, cs: width }, T::one(), ViewMut { data: dw, rs: ckk, cs: 1 });
        if let Some(dx) = dx.as_mut() {
            dcols.resize(ckk * width, T::zero());
            gemm(ckk, cout, width, T::one(), View { data: weight, rs: 1, cs: ckk }, dy_band, T::zero(), ViewMut { data: &mut dcols, rs: width, cs: 1 });
            col2im_add(&dcols, cin, g, r0, r1, dx);
        }
    }
    dx
}

/// Transpose-convolution forward. `weight` is `[cin][cout][k][k]`; input is
/// coarse, output fine.
pub(crate) fn transpose_forward<T: Real>(x: &[T], cin: usize, weight: &[T], bias: &[T], g: &Geometry) -> Vec<T> {
    let cout = bias.len();
    let ckk = cout * g.kernel * g.kernel;
    let plane = g.coarse * g.coarse;
    let fine_plane = g.fine * g.fine;
    let mut y = vec![T::zero(); cout * fine_plane];
    let mut cols = Vec::new();
    for (r0, r1) in g.bands(cout) {
        let width = (r1 - r0) * g.coarse;
        cols.resize(ckk * width, T::zero());
        let x_band = View { data: &x[r0 * g.coarse..], rs: plane, cs: 1 };
        gemm(ckk, cin, width, T::one(), View { data: weight, rs: 1, cs: ckk }, x_band, T::zero(), ViewMut { data: &mut cols, rs: width, cs: 1 });
        col2im_add(&cols, cout, g, r0, r1, &mut y);
    }
    add_bias(&mut y, bias, fine_plane);
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn transpose_backward<T: Real>(
    x: &[T],
    cin: usize,
    weight: &[T],
    dy: &[T],
    g: &Geometry,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    let cout = db.len();
    let ckk = cout * g.kernel * g.kernel;
    let plane = g.coarse * g.coarse;
    accumulate_bias_grad(dy, db, g.fine * g.fine);
    let mut dx = want_dx.then(|| vec![T::zero(); cin * plane]);
    let mut dcols = Vec::new();
    for (r0, r1) in g.bands(cout) {
        let width = (r1 - r0) * g.coarse;
        dcols.resize(ckk * width, T::zero());
        im2col(dy, cout, g, r0, r1, &mut dcols);
        let x_band = View { data: &x[r0 * g.coarse..], rs: plane, cs: 1 };
        gemm(cin, width, ckk, T::one(), x_band, View { data: &dcols, rs: 1, cs: width }, T::one(), ViewMut { data: dw, rs: ckk, cs: 1 });
        if let Some(dx) = dx.as_mut() {
            let out = ViewMut { data: &mut dx[r0 * g.coarse..], rs: plane, cs: 1 };
            gemm(cin, ckk, width, T::one(), View { data: weight, rs: ckk, cs: 1 }, View { data: &dcols, rs: width, cs: 1 }, T::zero(), out);
        }
    }
    dx
}
