//! Global and local discriminator towers (identical stacks, independent
//! parameters) and their averaged score map.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::data::{local_crop_batch, Mask};
use crate::error::{Error, Result};
use crate::generator::FRAME;
use crate::nn::act::{leaky_relu, leaky_relu_backward};
use crate::nn::conv::Conv2d;
use crate::nn::norm::{instance_norm, instance_norm_backward};
use crate::nn::{HasParams, ParamSlot, Real};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Channel widths of the six convolutions; the head emits one channel.
pub const TOWER_CHANNELS: [usize; 5] = [32, 64, 128, 256, 256];

/// Score maps are 1x12x12: 192 through four stride-2 convs, then two
/// stride-1 convs.
pub const SCORE_SIZE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscWiring {
    /// Single global tower; the combined score is D_G(x).
    GlobalOnly,
    /// Global plus local tower, averaged.
    Dual,
}

/// One tower: Conv(s2)+InstanceNorm+LeakyReLU four times, the same at
/// stride 1, then a raw 3x3 conv head. No squashing after the head.
pub struct DiscTower<S> {
    pub convs: Vec<Conv2d<S>>,
}

pub struct StageCache<S> {
    norm_y: Array4<S>,
    inv_std: Array2<S>,
    act_out: Array4<S>,
}

pub struct TowerCache<S> {
    x: Array4<S>,
    stages: Vec<StageCache<S>>,
    pub scores: Array4<S>,
}

impl<S: Real> DiscTower<S> {
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::init_with_rng(&mut rng)
    }

    pub fn init_with_rng(rng: &mut ChaCha20Rng) -> Self {
        let mut convs = Vec::with_capacity(6);
        let mut cin = 3;
        for (i, &cout) in TOWER_CHANNELS.iter().enumerate() {
            let stride = if i < 4 { 2 } else { 1 };
            convs.push(Conv2d::new(cin, cout, 3, stride, 1, rng));
            cin = cout;
        }
        convs.push(Conv2d::new(cin, 1, 3, 1, 1, rng));
        DiscTower { convs }
    }

    fn check_input(&self, x: &Array4<S>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != 3 || h != FRAME || w != FRAME {
            return Err(Error::shape(
                "discriminator input",
                format!("Nx3x{FRAME}x{FRAME}"),
                format!("Nx{c}x{h}x{w}"),
            ));
        }
        Ok(())
    }

    pub fn forward_train(&self, x: &Array4<S>) -> Result<TowerCache<S>> {
        self.check_input(x)?;
        let slope = S::from_f64(LEAKY_SLOPE);
        let mut stages = Vec::with_capacity(5);
        let mut cur = x.clone();
        for conv in &self.convs[..5] {
            let pre = conv.forward(&cur);
            let normed = instance_norm(&pre);
            let mut act = normed.y.clone();
            leaky_relu(&mut act, slope);
            cur = act.clone();
            stages.push(StageCache { norm_y: normed.y, inv_std: normed.inv_std, act_out: act });
        }
        let scores = self.convs[5].forward(&cur);
        Ok(TowerCache { x: x.clone(), stages, scores })
    }

    /// Raw 1x12x12 patch scores.
    pub fn forward(&self, x: &Array4<S>) -> Result<Array4<S>> {
        Ok(self.forward_train(x)?.scores)
    }

    /// Per-stage normalized activations (post-InstanceNorm, pre-LeakyReLU).
    pub fn forward_norm_outputs(&self, x: &Array4<S>) -> Result<Vec<Array4<S>>> {
        Ok(self
            .forward_train(x)?
            .stages
            .into_iter()
            .map(|s| s.norm_y)
            .collect())
    }

    /// Backprop from a score-map gradient to the input image gradient,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, cache: &TowerCache<S>, g_scores: &Array4<S>) -> Array4<S> {
        let slope = S::from_f64(LEAKY_SLOPE);
        let mut g = self.convs[5].backward(&cache.stages[4].act_out, g_scores);
        for i in (0..5).rev() {
            let st = &cache.stages[i];
            g = leaky_relu_backward(&st.act_out, &g, slope);
            g = instance_norm_backward(&st.norm_y, &st.inv_std, &g);
            let input = if i == 0 { &cache.x } else { &cache.stages[i - 1].act_out };
            g = self.convs[i].backward(input, &g);
        }
        g
    }
}

impl<S: Real> HasParams<S> for DiscTower<S> {
    fn param_slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a, S>>) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.param_slots(&format!("{prefix}conv{i}."), out);
        }
    }
}

/// The discriminator ensemble: always a global tower, plus a local tower
/// under dual wiring.
pub struct DiscPair<S> {
    pub wiring: DiscWiring,
    pub global: DiscTower<S>,
    pub local: Option<DiscTower<S>>,
}

impl<S: Real> DiscPair<S> {
    pub fn init(wiring: DiscWiring, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let global = DiscTower::init_with_rng(&mut rng);
        let local = match wiring {
            DiscWiring::Dual => Some(DiscTower::init_with_rng(&mut rng)),
            DiscWiring::GlobalOnly => None,
        };
        DiscPair { wiring, global, local }
    }

}

impl DiscPair<f32> {
    /// The averaged score (D_L(ϵ×x) + D_G(x)) / 2, or D_G(x) alone under
    /// global-only wiring.
    pub fn combined_score(&self, x: &Array4<f32>, mask: &Mask) -> Result<Array4<f32>> {
        let sg = self.global.forward(x)?;
        match (&self.wiring, &self.local) {
            (DiscWiring::GlobalOnly, _) => Ok(sg),
            (DiscWiring::Dual, Some(local)) => {
                let cropped = local_crop_batch(x, mask)?;
                let sl = local.forward(&cropped)?;
                Ok((&sg + &sl) / 2.0)
            }
            (DiscWiring::Dual, None) => unreachable!("dual wiring without local tower"),
        }
    }
}

impl<S: Real> HasParams<S> for DiscPair<S> {
    fn param_slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a, S>>) {
        self.global.param_slots(&format!("{prefix}global."), out);
        if let Some(local) = &mut self.local {
            local.param_slots(&format!("{prefix}local."), out);
        }
    }
}
