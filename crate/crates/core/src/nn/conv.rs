use ndarray::{Array1, Array2, Array4, ArrayView3, Axis};
use rand_core::RngCore;

use super::real::{gemm_nn, gemm_nt, gemm_tn};
use super::{fan_in_bound, uniform_init, HasParams, ParamSlot, Real};

pub fn conv_out_size(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h + 2 * pad - k) / stride + 1
}

pub fn tconv_out_size(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h - 1) * stride + k - 2 * pad
}

/// Unfold (c, h, w) into (c*k*k, oh*ow) patch columns. Out-of-range taps
/// stay zero (implicit zero padding).
pub fn im2col<S: Real>(
    x: &ArrayView3<S>,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<S> {
    let (c, h, w) = x.dim();
    let xs = x.as_slice().expect("im2col input must be contiguous");
    let mut cols = Array2::<S>::zeros((c * k * k, oh * ow));
    let cs = cols.as_slice_mut().unwrap();
    for ci in 0..c {
        let xb = ci * h * w;
        for ki in 0..k {
            for kj in 0..k {
                let rbase = ((ci * k + ki) * k + kj) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = xb + iy as usize * w;
                    let crow = rbase + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            cs[crow + ox] = xs[xrow + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the inverse of `im2col`: fold (c*k*k, oh*ow) columns back
/// onto a (c, h, w) image.
#[allow(clippy::too_many_arguments)]
pub fn col2im_add<S: Real>(
    cols: &Array2<S>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    out: &mut [S],
) {
    debug_assert_eq!(out.len(), c * h * w);
    let cs = cols.as_slice().unwrap();
    for ci in 0..c {
        let xb = ci * h * w;
        for ki in 0..k {
            for kj in 0..k {
                let rbase = ((ci * k + ki) * k + kj) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = xb + iy as usize * w;
                    let crow = rbase + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            out[xrow + ix as usize] = out[xrow + ix as usize] + cs[crow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution with bias, square kernel, symmetric zero padding.
/// Weight layout (out, in, k, k).
pub struct Conv2d<S> {
    pub w: Array4<S>,
    pub b: Array1<S>,
    pub gw: Array4<S>,
    pub gb: Array1<S>,
    pub stride: usize,
    pub pad: usize,
}

impl<S: Real> Conv2d<S> {
    pub fn new(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl RngCore,
    ) -> Self {
        let bound = fan_in_bound(cin * k * k);
        let w = Array4::from_shape_simple_fn((cout, cin, k, k), || uniform_init(rng, bound));
        Conv2d {
            w,
            b: Array1::zeros(cout),
            gw: Array4::zeros((cout, cin, k, k)),
            gb: Array1::zeros(cout),
            stride,
            pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.w.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.w.dim().0
    }

    pub fn kernel(&self) -> usize {
        self.w.dim().2
    }

    pub fn forward(&self, x: &Array4<S>) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels(), "conv input channel mismatch");
        let k = self.kernel();
        let (oh, ow) = (
            conv_out_size(h, k, self.stride, self.pad),
            conv_out_size(w, k, self.stride, self.pad),
        );
        let cout = self.out_channels();
        let ckk = c * k * k;
        let mut y = Array4::<S>::zeros((n, cout, oh, ow));
        let wm = self.w.as_slice().unwrap();
        for i in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), i), k, self.stride, self.pad, oh, ow);
            let mut yi = y.index_axis_mut(Axis(0), i);
            let ys = yi.as_slice_mut().unwrap();
            gemm_nn(cout, ckk, oh * ow, wm, cols.as_slice().unwrap(), S::default(), ys);
            for co in 0..cout {
                let bias = self.b[co];
                for v in &mut ys[co * oh * ow..(co + 1) * oh * ow] {
                    *v = *v + bias;
                }
            }
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array4<S>, gy: &Array4<S>) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        let k = self.kernel();
        let (oh, ow) = (
            conv_out_size(h, k, self.stride, self.pad),
            conv_out_size(w, k, self.stride, self.pad),
        );
        let cout = self.out_channels();
        let ckk = c * k * k;
        debug_assert_eq!(gy.dim(), (n, cout, oh, ow));
        let mut gx = Array4::<S>::zeros((n, c, h, w));
        let wm = self.w.as_slice().unwrap();
        let gwm = self.gw.as_slice_mut().unwrap();
        for i in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), i), k, self.stride, self.pad, oh, ow);
            let gyi = gy.index_axis(Axis(0), i);
            let gys = gyi.as_slice().unwrap();
            gemm_nt(cout, oh * ow, ckk, gys, cols.as_slice().unwrap(), S::one(), gwm);
            for co in 0..cout {
                let mut acc = S::default();
                for v in &gys[co * oh * ow..(co + 1) * oh * ow] {
                    acc = acc + *v;
                }
                self.gb[co] = self.gb[co] + acc;
            }
            let mut gcols = Array2::<S>::zeros((ckk, oh * ow));
            gemm_tn(
                ckk,
                cout,
                oh * ow,
                wm,
                gys,
                S::default(),
                gcols.as_slice_mut().unwrap(),
            );
            let mut gxi = gx.index_axis_mut(Axis(0), i);
            col2im_add(
                &gcols,
                c,
                h,
                w,
                k,
                self.stride,
                self.pad,
                oh,
                ow,
                gxi.as_slice_mut().unwrap(),
            );
        }
        gx
    }
}

impl<S: Real> HasParams<S> for Conv2d<S> {
    fn param_slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a, S>>) {
        out.push(ParamSlot {
            name: format!("{prefix}w"),
            shape: self.w.shape().to_vec(),
            value: self.w.as_slice_mut().unwrap(),
            grad: self.gw.as_slice_mut().unwrap(),
        });
        out.push(ParamSlot {
            name: format!("{prefix}b"),
            shape: self.b.shape().to_vec(),
            value: self.b.as_slice_mut().unwrap(),
            grad: self.gb.as_slice_mut().unwrap(),
        });
    }
}

/// Transposed 2-D convolution (fractionally strided). Weight layout
/// (in, out, k, k); output size (h-1)*stride + k - 2*pad.
pub struct ConvTranspose2d<S> {
    pub w: Array4<S>,
    pub b: Array1<S>,
    pub gw: Array4<S>,
    pub gb: Array1<S>,
    pub stride: usize,
    pub pad: usize,
}

impl<S: Real> ConvTranspose2d<S> {
    pub fn new(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl RngCore,
    ) -> Self {
        let bound = fan_in_bound(cin * k * k);
        let w = Array4::from_shape_simple_fn((cin, cout, k, k), || uniform_init(rng, bound));
        ConvTranspose2d {
            w,
            b: Array1::zeros(cout),
            gw: Array4::zeros((cin, cout, k, k)),
            gb: Array1::zeros(cout),
            stride,
            pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.w.dim().0
    }

    pub fn out_channels(&self) -> usize {
        self.w.dim().1
    }

    pub fn kernel(&self) -> usize {
        self.w.dim().2
    }

    pub fn forward(&self, x: &Array4<S>) -> Array4<S> {
        let (n, c, ih, iw) = x.dim();
        assert_eq!(c, self.in_channels(), "tconv input channel mismatch");
        let k = self.kernel();
        let cout = self.out_channels();
        let (oh, ow) = (
            tconv_out_size(ih, k, self.stride, self.pad),
            tconv_out_size(iw, k, self.stride, self.pad),
        );
        let cokk = cout * k * k;
        let mut y = Array4::<S>::zeros((n, cout, oh, ow));
        let wm = self.w.as_slice().unwrap();
        for i in 0..n {
            let xi = x.index_axis(Axis(0), i);
            let xs = xi.as_slice().unwrap();
            let mut cols = Array2::<S>::zeros((cokk, ih * iw));
            gemm_tn(cokk, c, ih * iw, wm, xs, S::default(), cols.as_slice_mut().unwrap());
            let mut yi = y.index_axis_mut(Axis(0), i);
            let ys = yi.as_slice_mut().unwrap();
            col2im_add(&cols, cout, oh, ow, k, self.stride, self.pad, ih, iw, ys);
            for co in 0..cout {
                let bias = self.b[co];
                for v in &mut ys[co * oh * ow..(co + 1) * oh * ow] {
                    *v = *v + bias;
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Array4<S>, gy: &Array4<S>) -> Array4<S> {
        let (n, c, ih, iw) = x.dim();
        let k = self.kernel();
        let cout = self.out_channels();
        let (oh, ow) = (
            tconv_out_size(ih, k, self.stride, self.pad),
            tconv_out_size(iw, k, self.stride, self.pad),
        );
        debug_assert_eq!(gy.dim(), (n, cout, oh, ow));
        let cokk = cout * k * k;
        let mut gx = Array4::<S>::zeros((n, c, ih, iw));
        let wm = self.w.as_slice().unwrap();
        let gwm = self.gw.as_slice_mut().unwrap();
        for i in 0..n {
            let gyi = gy.index_axis(Axis(0), i);
            let gcols = im2col(&gyi, k, self.stride, self.pad, ih, iw);
            let mut gxi = gx.index_axis_mut(Axis(0), i);
            gemm_nn(
                c,
                cokk,
                ih * iw,
                wm,
                gcols.as_slice().unwrap(),
                S::default(),
                gxi.as_slice_mut().unwrap(),
            );
            let xi = x.index_axis(Axis(0), i);
            gemm_nt(
                c,
                ih * iw,
                cokk,
                xi.as_slice().unwrap(),
                gcols.as_slice().unwrap(),
                S::one(),
                gwm,
            );
            let gys = gyi.as_slice().unwrap();
            for co in 0..cout {
                let mut acc = S::default();
                for v in &gys[co * oh * ow..(co + 1) * oh * ow] {
                    acc = acc + *v;
                }
                self.gb[co] = self.gb[co] + acc;
            }
        }
        gx
    }
}

impl<S: Real> HasParams<S> for ConvTranspose2d<S> {
    fn param_slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a, S>>) {
        out.push(ParamSlot {
            name: format!("{prefix}w"),
            shape: self.w.shape().to_vec(),
            value: self.w.as_slice_mut().unwrap(),
            grad: self.gw.as_slice_mut().unwrap(),
        });
        out.push(ParamSlot {
            name: format!("{prefix}b"),
            shape: self.b.shape().to_vec(),
            value: self.b.as_slice_mut().unwrap(),
            grad: self.gb.as_slice_mut().unwrap(),
        });
    }
}
