//! Shared dense-math inner loops. Everything accumulates into its output so
//! backward passes can reuse the same kernels.

use crate::nn::Scalar;

/// Dot product unrolled into four independent accumulators. The summation
/// order is fixed, so results are reproducible run to run.
#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (S::zero(), S::zero(), S::zero(), S::zero());
    for c in 0..chunks {
        let i = 4 * c;
        s0 = s0 + a[i] * b[i];
        s1 = s1 + a[i + 1] * b[i + 1];
        s2 = s2 + a[i + 2] * b[i + 2];
        s3 = s3 + a[i + 3] * b[i + 3];
    }
    let mut tail = S::zero();
    for i in 4 * chunks..n {
        tail = tail + a[i] * b[i];
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

/// y[b, o] += sum_i x[b, i] * w[o, i]
pub(crate) fn addmm_xw<S: Scalar>(batch: usize, in_dim: usize, out_dim: usize, x: &[S], w: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), batch * in_dim);
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(y.len(), batch * out_dim);
    for b in 0..batch {
        let xr = &x[b * in_dim..(b + 1) * in_dim];
        let yr = &mut y[b * out_dim..(b + 1) * out_dim];
        for o in 0..out_dim {
            let wr = &w[o * in_dim..(o + 1) * in_dim];
            yr[o] += dot(xr, wr);
        }
    }
}

/// dx[b, i] += sum_o dy[b, o] * w[o, i]
pub(crate) fn addmm_dyw<S: Scalar>(batch: usize, in_dim: usize, out_dim: usize, dy: &[S], w: &[S], dx: &mut [S]) {
    for b in 0..batch {
        let dyr = &dy[b * out_dim..(b + 1) * out_dim];
        let dxr = &mut dx[b * in_dim..(b + 1) * in_dim];
        for o in 0..out_dim {
            let g = dyr[o];
            if g == S::zero() {
                continue;
            }
            let wr = &w[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                dxr[i] += g * wr[i];
            }
        }
    }
}

/// dw[o, i] += sum_b dy[b, o] * x[b, i]
pub(crate) fn addmm_dyx<S: Scalar>(batch: usize, in_dim: usize, out_dim: usize, dy: &[S], x: &[S], dw: &mut [S]) {
    for b in 0..batch {
        let dyr = &dy[b * out_dim..(b + 1) * out_dim];
        let xr = &x[b * in_dim..(b + 1) * in_dim];
        for o in 0..out_dim {
            let g = dyr[o];
            if g == S::zero() {
                continue;
            }
            let dwr = &mut dw[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                dwr[i] += g * xr[i];
            }
        }
    }
}

/// db[o] += sum_b dy[b, o]
pub(crate) fn add_bias_grad<S: Scalar>(batch: usize, out_dim: usize, dy: &[S], db: &mut [S]) {
    for b in 0..batch {
        let dyr = &dy[b * out_dim..(b + 1) * out_dim];
        for o in 0..out_dim {
            db[o] += dyr[o];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addmm_xw_matches_hand_product() {
        // x = [[1, 2]], w = [[3, 4], [5, 6]] (row per output)
        let x = [1.0_f64, 2.0];
        let w = [3.0, 4.0, 5.0, 6.0];
        let mut y = [0.0; 2];
        addmm_xw(1, 2, 2, &x, &w, &mut y);
        assert_eq!(y, [11.0, 17.0]);
    }

    #[test]
    fn backward_kernels_are_transposes_of_forward() {
        let dy = [1.0_f64, -2.0];
        let w = [3.0, 4.0, 5.0, 6.0];
        let x = [1.0, 2.0];
        let mut dx = [0.0; 2];
        addmm_dyw(1, 2, 2, &dy, &w, &mut dx);
        assert_eq!(dx, [3.0 - 10.0, 4.0 - 12.0]);
        let mut dw = [0.0; 4];
        addmm_dyx(1, 2, 2, &dy, &x, &mut dw);
        assert_eq!(dw, [1.0, 2.0, -2.0, -4.0]);
        let mut db = [0.0; 2];
        add_bias_grad(1, 2, &dy, &mut db);
        assert_eq!(db, [1.0, -2.0]);
    }
}
