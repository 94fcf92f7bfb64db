//! Raw numeric kernels over flat row-major buffers.

/// Row-major matrix view description for [`gemm`].
#[derive(Clone, Copy, Debug)]
pub(crate) enum Layout {
    /// Stored as written: `rows x cols`.
    Normal,
    /// Stored transposed: the buffer holds `cols x rows`.
    Transposed,
}

/// `c = a * b + beta * c` where `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_layout: Layout,
    b: &[f64],
    b_layout: Layout,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match a_layout {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match b_layout {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    // SAFETY: bounds asserted above; strides describe matrices within those bounds.
    unsafe {
        matrixmultiply::dgemm(
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

/// Unfolds one `C x H x W` image into a `(C*9) x (H*W)` patch matrix for a
/// 3x3 kernel with padding 1 and stride 1.
pub(crate) fn im2col_3x3(image: &[f64], channels: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    debug_assert_eq!(cols.len(), channels * 9 * hw);
    for c in 0..channels {
        let plane = &image[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * hw;
                let dst = &mut cols[row..row + hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, o) in out.iter_mut().enumerate() {
                        let sx = x as isize + kx as isize - 1;
                        *o = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_3x3`]: scatters patch gradients back onto the image,
/// accumulating into `image_grad`.
pub(crate) fn col2im_3x3(cols: &[f64], channels: usize, h: usize, w: usize, image_grad: &mut [f64]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut image_grad[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * hw;
                let src = &cols[row..row + hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

/// Half-open `[start, end)` range of input indices pooled into output bin `i`.
pub(crate) fn adaptive_bin(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = (i * input) / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}
