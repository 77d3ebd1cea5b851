//! Thin wrappers over `matrixmultiply::dgemm` for the three products a dense
//! layer needs. All matrices are row-major.

/// `y[b, o] = beta * y[b, o] + sum_i x[b, i] * w[o, i]`
pub(crate) fn x_wt(x: &[f64], w: &[f64], y: &mut [f64], batch: usize, fan_in: usize, fan_out: usize, beta: f64) {
    debug_assert_eq!(x.len(), batch * fan_in);
    debug_assert_eq!(w.len(), fan_out * fan_in);
    debug_assert_eq!(y.len(), batch * fan_out);
    // SAFETY: slice lengths are checked above and the strides describe
    // in-bounds row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            batch,
            fan_in,
            fan_out,
            1.0,
            x.as_ptr(),
            fan_in as isize,
            1,
            w.as_ptr(),
            1,
            fan_in as isize,
            beta,
            y.as_mut_ptr(),
            fan_out as isize,
            1,
        );
    }
}

/// `dw[o, i] += sum_b dz[b, o] * x[b, i]`
pub(crate) fn dzt_x(dz: &[f64], x: &[f64], dw: &mut [f64], batch: usize, fan_in: usize, fan_out: usize) {
    debug_assert_eq!(dz.len(), batch * fan_out);
    debug_assert_eq!(x.len(), batch * fan_in);
    debug_assert_eq!(dw.len(), fan_out * fan_in);
    // SAFETY: see `x_wt`.
    unsafe {
        matrixmultiply::dgemm(
            fan_out,
            batch,
            fan_in,
            1.0,
            dz.as_ptr(),
            1,
            fan_out as isize,
            x.as_ptr(),
            fan_in as isize,
            1,
            1.0,
            dw.as_mut_ptr(),
            fan_in as isize,
            1,
        );
    }
}

/// `dx[b, i] = sum_o dz[b, o] * w[o, i]`
pub(crate) fn dz_w(dz: &[f64], w: &[f64], dx: &mut [f64], batch: usize, fan_in: usize, fan_out: usize) {
    debug_assert_eq!(dz.len(), batch * fan_out);
    debug_assert_eq!(w.len(), fan_out * fan_in);
    debug_assert_eq!(dx.len(), batch * fan_in);
    // SAFETY: see `x_wt`.
    unsafe {
        matrixmultiply::dgemm(
            batch,
            fan_out,
            fan_in,
            1.0,
            dz.as_ptr(),
            fan_out as isize,
            1,
            w.as_ptr(),
            fan_in as isize,
            1,
            0.0,
            dx.as_mut_ptr(),
            fan_in as isize,
            1,
        );
    }
}
