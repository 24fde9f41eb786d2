use ndarray::{Array2, Array4, Axis};

use super::Real;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Instance normalization without learned affine parameters: each (sample,
/// channel) plane is shifted to zero mean and scaled to unit variance.
pub struct InstanceNormOut<S> {
    pub y: Array4<S>,
    pub inv_std: Array2<S>,
}

pub fn instance_norm<S: Real>(x: &Array4<S>) -> InstanceNormOut<S> {
    let (n, c, h, w) = x.dim();
    let m = S::from_f64((h * w) as f64);
    let eps = S::from_f64(INSTANCE_NORM_EPS);
    let mut y = x.clone();
    let mut inv_std = Array2::<S>::zeros((n, c));
    for i in 0..n {
        for ci in 0..c {
            let mut plane = y.index_axis_mut(Axis(0), i);
            let mut plane = plane.index_axis_mut(Axis(0), ci);
            let mut mean = S::default();
            for v in plane.iter() {
                mean = mean + *v;
            }
            mean = mean / m;
            let mut var = S::default();
            for v in plane.iter() {
                let d = *v - mean;
                var = var + d * d;
            }
            var = var / m;
            let is = S::one() / (var + eps).sqrt();
            inv_std[[i, ci]] = is;
            plane.mapv_inplace(|v| (v - mean) * is);
        }
    }
    InstanceNormOut { y, inv_std }
}

/// Gradient through instance norm given the normalized output `y` and the
/// saved `inv_std`: gx = inv_std * (g - mean(g) - y * mean(g * y)).
pub fn instance_norm_backward<S: Real>(
    y: &Array4<S>,
    inv_std: &Array2<S>,
    gy: &Array4<S>,
) -> Array4<S> {
    let (n, c, h, w) = y.dim();
    let m = S::from_f64((h * w) as f64);
    let mut gx = Array4::<S>::zeros((n, c, h, w));
    for i in 0..n {
        for ci in 0..c {
            let yp = y.index_axis(Axis(0), i);
            let yp = yp.index_axis(Axis(0), ci);
            let gp = gy.index_axis(Axis(0), i);
            let gp = gp.index_axis(Axis(0), ci);
            let mut gmean = S::default();
            let mut gymean = S::default();
            for (g, v) in gp.iter().zip(yp.iter()) {
                gmean = gmean + *g;
                gymean = gymean + *g * *v;
            }
            gmean = gmean / m;
            gymean = gymean / m;
            let is = inv_std[[i, ci]];
            let mut op = gx.index_axis_mut(Axis(0), i);
            let mut op = op.index_axis_mut(Axis(0), ci);
            for ((o, g), v) in op.iter_mut().zip(gp.iter()).zip(yp.iter()) {
                *o = is * (*g - gmean - *v * gymean);
            }
        }
    }
    gx
}
