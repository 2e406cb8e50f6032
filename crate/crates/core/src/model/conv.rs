//! im2col / col2im for dilated, strided, zero-padded 2-D convolution.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// "Same"-style padding: output is `ceil(input / stride)` for odd kernels.
    pub fn new(in_channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize, dilation: usize) -> Self {
        let pad = dilation * (kernel - 1) / 2;
        let span = dilation * (kernel - 1) + 1;
        let out = |n: usize| (n + 2 * pad - span) / stride + 1;
        Self {
            in_channels,
            in_h,
            in_w,
            kernel,
            stride,
            dilation,
            pad,
            out_h: out(in_h),
            out_w: out(in_w),
        }
    }

    /// Rows of the column matrix: `in_channels * kernel * kernel`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_cells(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky * self.dilation) as isize - self.pad as isize;
        let ix = (ox * self.stride + kx * self.dilation) as isize - self.pad as isize;
        (iy >= 0 && ix >= 0 && (iy as usize) < self.in_h && (ix as usize) < self.in_w)
            .then_some((iy as usize, ix as usize))
    }
}

/// Column matrix `[patch_len, out_cells]`, row-major.
pub fn im2col(input: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let n = g.out_cells();
    let mut cols = vec![0.0; g.patch_len() * n];
    for c in 0..g.in_channels {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                            dst[oy * g.out_w + ox] = plane[iy * g.in_w + ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub fn col2im(cols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let n = g.out_cells();
    let mut out = vec![0.0; g.in_channels * g.in_h * g.in_w];
    for c in 0..g.in_channels {
        let plane = &mut out[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                            plane[iy * g.in_w + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}
