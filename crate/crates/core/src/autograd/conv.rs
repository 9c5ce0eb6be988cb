//! im2col-based convolution kernels on NCHW arrays with square kernels.

use ndarray::{Array2, ArrayD, ArrayView2, Ix4, IxDyn};

use super::Array;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// The 4x4, stride-2, pad-1 geometry that halves (or, transposed,
    /// doubles) the spatial size.
    pub const HALVING: ConvGeom = ConvGeom { kernel: 4, stride: 2, pad: 1 };

    pub fn out_size(&self, input: usize, k: usize) -> usize {
        (input + 2 * self.pad - k) / self.stride + 1
    }
}

fn dims4(a: &Array) -> (usize, usize, usize, usize) {
    let s = a.shape();
    assert_eq!(s.len(), 4, "expected a 4-d array, got {:?}", s);
    (s[0], s[1], s[2], s[3])
}

/// Rows are output positions (n, oy, ox); columns are (c, ky, kx).
fn im2col(x: &Array, k: usize, geom: ConvGeom) -> (Array2<f64>, usize, usize) {
    let (n, c, h, w) = dims4(x);
    let oh = geom.out_size(h, k);
    let ow = geom.out_size(w, k);
    let x = x.view().into_dimensionality::<Ix4>().unwrap();
    let mut cols = Array2::<f64>::zeros((n * oh * ow, c * k * k));
    let row_len = c * k * k;
    let data = cols.as_slice_mut().unwrap();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * row_len;
                for ch in 0..c {
                    for ky in 0..k {
                        let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            data[row + (ch * k + ky) * k + kx] = x[[b, ch, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

/// Scatter-add inverse of [`im2col`].
fn col2im(cols: ArrayView2<f64>, shape: (usize, usize, usize, usize), k: usize, geom: ConvGeom) -> Array {
    let (n, c, h, w) = shape;
    let oh = geom.out_size(h, k);
    let ow = geom.out_size(w, k);
    let mut out = ndarray::Array4::<f64>::zeros((n, c, h, w));
    let row_len = c * k * k;
    let cols = cols.as_standard_layout();
    let data = cols.as_slice().unwrap();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * row_len;
                for ch in 0..c {
                    for ky in 0..k {
                        let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[[b, ch, iy as usize, ix as usize]] += data[row + (ch * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
    out.into_dyn()
}

/// [N,C,H,W] -> [N*H*W, C]
fn to_rows(a: &Array) -> Array2<f64> {
    let (n, c, h, w) = dims4(a);
    a.view()
        .permuted_axes(IxDyn(&[0, 2, 3, 1]))
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * h * w, c))
        .unwrap()
}

/// [N*H*W, C] -> [N,C,H,W]
fn from_rows(rows: Array2<f64>, n: usize, h: usize, w: usize) -> Array {
    let c = rows.ncols();
    rows.into_shape_with_order(IxDyn(&[n, h, w, c]))
        .unwrap()
        .permuted_axes(IxDyn(&[0, 3, 1, 2]))
        .as_standard_layout()
        .into_owned()
}

fn kernel_matrix(w: &Array) -> (Array2<f64>, usize) {
    let (o, c, k, k2) = dims4(w);
    assert_eq!(k, k2, "square kernels only");
    let m = w.as_standard_layout().into_owned().into_shape_with_order((o, c * k * k)).unwrap();
    (m, k)
}

pub(crate) fn conv2d_forward(x: &Array, w: &Array, geom: ConvGeom) -> Array {
    let (n, c, _, _) = dims4(x);
    assert_eq!(w.shape()[1], c, "conv2d: channel mismatch {:?} vs {:?}", x.shape(), w.shape());
    let (wm, k) = kernel_matrix(w);
    let (cols, oh, ow) = im2col(x, k, geom);
    from_rows(cols.dot(&wm.t()), n, oh, ow)
}

pub(crate) fn conv_transpose2d_forward(x: &Array, w: &Array, geom: ConvGeom, hw: (usize, usize)) -> Array {
    let (n, a, h, wd) = dims4(x);
    let (wa, b, k, _) = dims4(w);
    assert_eq!(wa, a, "conv_transpose2d: channel mismatch {:?} vs {:?}", x.shape(), w.shape());
    assert_eq!(geom.out_size(hw.0, k), h, "conv_transpose2d: output height inconsistent");
    assert_eq!(geom.out_size(hw.1, k), wd, "conv_transpose2d: output width inconsistent");
    let (wm, _) = kernel_matrix(w);
    let cols = to_rows(x).dot(&wm);
    col2im(cols.view(), (n, b, hw.0, hw.1), k, geom)
}

pub(crate) fn conv2d_weight_grad(x: &Array, gy: &Array, geom: ConvGeom) -> Array {
    let (n, c, h, _) = dims4(x);
    let (gn, o, oh, _) = dims4(gy);
    assert_eq!(n, gn, "conv_weight_grad: batch mismatch");
    let k = geom.kernel;
    assert_eq!(geom.out_size(h, k), oh, "conv_weight_grad: inconsistent shapes");
    let (cols, _, _) = im2col(x, k, geom);
    let g = to_rows(gy);
    let dw = g.t().dot(&cols);
    ArrayD::from_shape_vec(IxDyn(&[o, c, k, k]), dw.as_standard_layout().iter().copied().collect()).unwrap()
}
