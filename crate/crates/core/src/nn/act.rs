use ndarray::Array4;

use super::Real;

pub fn relu<S: Real>(x: &mut Array4<S>) {
    x.mapv_inplace(|v| if v > S::default() { v } else { S::default() });
}

/// ReLU input gradient from the stored post-activation output.
pub fn relu_backward<S: Real>(y: &Array4<S>, gy: &Array4<S>) -> Array4<S> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| {
        if v <= S::default() {
            *g = S::default();
        }
    });
    gx
}

pub fn leaky_relu<S: Real>(x: &mut Array4<S>, slope: S) {
    x.mapv_inplace(|v| if v > S::default() { v } else { v * slope });
}

/// LeakyReLU gradient; with positive slope the output sign matches the
/// input sign, so the stored output is enough.
pub fn leaky_relu_backward<S: Real>(y: &Array4<S>, gy: &Array4<S>, slope: S) -> Array4<S> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| {
        if v <= S::default() {
            *g = *g * slope;
        }
    });
    gx
}

pub fn sigmoid<S: Real>(x: &mut Array4<S>) {
    x.mapv_inplace(|v| S::one() / (S::one() + (-v).exp()));
}

pub fn sigmoid_backward<S: Real>(y: &Array4<S>, gy: &Array4<S>) -> Array4<S> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| {
        *g = *g * v * (S::one() - v);
    });
    gx
}
