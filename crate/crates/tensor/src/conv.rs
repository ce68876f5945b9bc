//! Raw 1D convolution kernels.
//!
//! The three functions below are the partial maps of one trilinear form
//! `T(x, w, y) = <conv(x, w), y>`:
//!
//! * [`conv_forward`] is linear in `x` and in `w`,
//! * [`conv_input_adjoint`] returns the `x`-gradient of `T`,
//! * [`conv_kernel_adjoint`] returns the `w`-gradient of `T`.
//!
//! Because each one's vector-Jacobian products are again one of the three,
//! the graph can differentiate through convolutions any number of times.

/// Stride, padding and lengths of one convolution.
///
/// `len_out = ceil(len_in / stride)`; the zero padding needed to reach that
/// length is split with the smaller half on the left. For an odd kernel with
/// stride 1 both sides get `(kernel - 1) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub len_in: usize,
    pub len_out: usize,
}

impl ConvGeometry {
    pub fn same_ceil(len_in: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel > 0 && stride > 0 && len_in > 0);
        let len_out = len_in.div_ceil(stride);
        let span = (len_out - 1) * stride + kernel;
        let total_pad = span.saturating_sub(len_in);
        Self {
            kernel,
            stride,
            pad_left: total_pad / 2,
            len_in,
            len_out,
        }
    }

    /// Geometry of a transpose convolution that maps `len` steps onto exactly
    /// `len * stride` steps: the adjoint of the strided convolution over the
    /// longer sequence.
    pub fn transpose_exact(len: usize, kernel: usize, stride: usize) -> Self {
        let g = Self::same_ceil(len * stride, kernel, stride);
        debug_assert_eq!(g.len_out, len);
        g
    }

    #[inline]
    fn source(&self, t: usize, k: usize) -> Option<usize> {
        let pos = (t * self.stride + k) as isize - self.pad_left as isize;
        (pos >= 0 && (pos as usize) < self.len_in).then_some(pos as usize)
    }
}

/// `out[n,o,t] = sum_{c,k} w[o,c,k] * x[n,c,t*s + k - pad]`.
pub fn conv_forward(
    x: &[f64],
    w: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let (k_len, l_in, l_out) = (g.kernel, g.len_in, g.len_out);
    let mut out = vec![0.0; batch * c_out * l_out];
    for n in 0..batch {
        for o in 0..c_out {
            let row = &mut out[(n * c_out + o) * l_out..(n * c_out + o + 1) * l_out];
            for c in 0..c_in {
                let xs = &x[(n * c_in + c) * l_in..(n * c_in + c + 1) * l_in];
                let ws = &w[(o * c_in + c) * k_len..(o * c_in + c + 1) * k_len];
                for (t, acc) in row.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (k, wk) in ws.iter().enumerate() {
                        if let Some(i) = g.source(t, k) {
                            s += wk * xs[i];
                        }
                    }
                    *acc += s;
                }
            }
        }
    }
    out
}

/// `x_bar[n,c,i] = sum_{o,k,t : t*s+k-pad = i} w[o,c,k] * y[n,o,t]`.
pub fn conv_input_adjoint(
    y: &[f64],
    w: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let (k_len, l_in, l_out) = (g.kernel, g.len_in, g.len_out);
    let mut out = vec![0.0; batch * c_in * l_in];
    for n in 0..batch {
        for o in 0..c_out {
            let ys = &y[(n * c_out + o) * l_out..(n * c_out + o + 1) * l_out];
            for c in 0..c_in {
                let xs = &mut out[(n * c_in + c) * l_in..(n * c_in + c + 1) * l_in];
                let ws = &w[(o * c_in + c) * k_len..(o * c_in + c + 1) * k_len];
                for (t, yv) in ys.iter().enumerate() {
                    for (k, wk) in ws.iter().enumerate() {
                        if let Some(i) = g.source(t, k) {
                            xs[i] += wk * yv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `w_bar[o,c,k] = sum_{n,t} y[n,o,t] * x[n,c,t*s + k - pad]`.
pub fn conv_kernel_adjoint(
    x: &[f64],
    y: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let (k_len, l_in, l_out) = (g.kernel, g.len_in, g.len_out);
    let mut out = vec![0.0; c_out * c_in * k_len];
    for n in 0..batch {
        for o in 0..c_out {
            let ys = &y[(n * c_out + o) * l_out..(n * c_out + o + 1) * l_out];
            for c in 0..c_in {
                let xs = &x[(n * c_in + c) * l_in..(n * c_in + c + 1) * l_in];
                let ws = &mut out[(o * c_in + c) * k_len..(o * c_in + c + 1) * k_len];
                for (t, yv) in ys.iter().enumerate() {
                    for (k, acc) in ws.iter_mut().enumerate() {
                        if let Some(i) = g.source(t, k) {
                            *acc += yv * xs[i];
                        }
                    }
                }
            }
        }
    }
    out
}
