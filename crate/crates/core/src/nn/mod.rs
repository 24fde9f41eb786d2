pub mod act;
pub mod conv;
pub mod norm;
pub mod real;

pub use real::Real;

use rand_core::RngCore;

/// Mutable view over one parameter tensor and its gradient accumulator.
/// Slot order is stable across runs; the optimizer and the checkpoint
/// format both index by it.
pub struct ParamSlot<'a, S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [S],
    pub grad: &'a mut [S],
}

pub trait HasParams<S: Real> {
    fn param_slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a, S>>);

    fn zero_grads(&mut self) {
        let mut slots = Vec::new();
        self.param_slots("", &mut slots);
        for s in slots {
            s.grad.fill(S::default());
        }
    }
    fn collect_slots(&mut self) -> Vec<ParamSlot<'_, S>> {
        let mut slots = Vec::new();
        self.param_slots("", &mut slots);
        slots
    }
}

/// Uniform sample in (-bound, bound), driven by the raw RNG stream so the
/// draw sequence is identical for every scalar type.
pub fn uniform_init<S: Real>(rng: &mut impl RngCore, bound: f64) -> S {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    S::from_f64((2.0 * u - 1.0) * bound)
}

/// He-style fan-in bound used for every convolution in the stack.
pub fn fan_in_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}
