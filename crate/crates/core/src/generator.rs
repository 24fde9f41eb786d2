//! The generator: a 5x5 stem, five residual (or plain) encoder blocks, a
//! three-conv bottleneck, and a transposed-convolution decoder with a
//! sigmoid head. 4-channel masked input in, 3-channel frame out.

use ndarray::Array4;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::error::{Error, Result};
use crate::nn::act::{relu, relu_backward, sigmoid, sigmoid_backward};
use crate::nn::conv::{Conv2d, ConvTranspose2d};
use crate::nn::{HasParams, ParamSlot, Real};

/// Frame side length; the whole stack is laid out for 192x192.
pub const FRAME: usize = 192;

/// Encoder block layout: (in_channels, out_channels, stride).
pub const ENCODER_BLOCKS: [(usize, usize, usize); 5] =
    [(16, 128, 2), (128, 256, 2), (256, 256, 1), (256, 256, 1), (256, 256, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorArch {
    /// Residual encoder blocks (shortcut + two-conv branch).
    Residual,
    /// Residual blocks replaced by single stride-matched convolutions.
    Plain,
}

/// Two 3x3 convolutions with ReLU, added to a (possibly projected)
/// shortcut of the block input. No normalization anywhere.
pub struct ResidualBlock<S> {
    pub conv1: Conv2d<S>,
    pub conv2: Conv2d<S>,
    pub shortcut: Option<Conv2d<S>>,
}

pub struct ResCache<S> {
    r1: Array4<S>,
    r2: Array4<S>,
}

impl<S: Real> ResidualBlock<S> {
    pub fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha20Rng) -> Self {
        assert!(stride == 1 || stride == 2, "residual block stride must be 1 or 2");
        let conv1 = Conv2d::new(cin, cout, 3, stride, 1, rng);
        let conv2 = Conv2d::new(cout, cout, 3, 1, 1, rng);
        let shortcut = if cin != cout || stride != 1 {
            Some(Conv2d::new(cin, cout, 1, stride, 0, rng))
        } else {
            None
        };
        ResidualBlock { conv1, conv2, shortcut }
    }

    pub fn forward(&self, x: &Array4<S>) -> (Array4<S>, ResCache<S>) {
        let mut r1 = self.conv1.forward(x);
        relu(&mut r1);
        let mut r2 = self.conv2.forward(&r1);
        relu(&mut r2);
        let y = match &self.shortcut {
            Some(sc) => sc.forward(x) + &r2,
            None => x + &r2,
        };
        (y, ResCache { r1, r2 })
    }

    pub fn backward(&mut self, x: &Array4<S>, cache: &ResCache<S>, gy: &Array4<S>) -> Array4<S> {
        let g = relu_backward(&cache.r2, gy);
        let g = self.conv2.backward(&cache.r1, &g);
        let g = relu_backward(&cache.r1, &g);
        let gx_branch = self.conv1.backward(x, &g);
        let gx_short = match &mut self.shortcut {
            Some(sc) => sc.backward(x, gy),
            None => gy.clone(),
        };
        gx_branch + gx_short
    }
}

impl<S: Real> HasParams<S> for ResidualBlock<S> {
    fn param_slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a, S>>) {
        self.conv1.param_slots(&format!("{prefix}conv1."), out);
        self.conv2.param_slots(&format!("{prefix}conv2."), out);
        if let Some(sc) = &mut self.shortcut {
            sc.param_slots(&format!("{prefix}shortcut."), out);
        }
    }
}

pub enum EncoderBlock<S> {
    Residual(ResidualBlock<S>),
    Plain(Conv2d<S>),
}

pub enum BlockCache<S> {
    Residual(ResCache<S>),
    Plain,
}

impl<S: Real> EncoderBlock<S> {
    fn forward(&self, x: &Array4<S>) -> (Array4<S>, BlockCache<S>) {
        match self {
            EncoderBlock::Residual(rb) => {
                let (y, c) = rb.forward(x);
                (y, BlockCache::Residual(c))
            }
            EncoderBlock::Plain(conv) => {
                let mut y = conv.forward(x);
                relu(&mut y);
                (y, BlockCache::Plain)
            }
        }
    }

    /// `y` is this block's forward output (needed for the plain ReLU).
    fn backward(
        &mut self,
        x: &Array4<S>,
        y: &Array4<S>,
        cache: &BlockCache<S>,
        gy: &Array4<S>,
    ) -> Array4<S> {
        match (self, cache) {
            (EncoderBlock::Residual(rb), BlockCache::Residual(c)) => rb.backward(x, c, gy),
            (EncoderBlock::Plain(conv), BlockCache::Plain) => {
                let g = relu_backward(y, gy);
                conv.backward(x, &g)
            }
            _ => unreachable!("block/cache variant mismatch"),
        }
    }

    fn trace_label(&self) -> &'static str {
        match self {
            EncoderBlock::Residual(_) => "ResBlock",
            EncoderBlock::Plain(_) => "Conv",
        }
    }
}

/// One row of a forward shape trace: (layer label, (C, H, W)).
pub type TraceRow = (String, (usize, usize, usize));

pub struct Generator<S> {
    pub arch: GeneratorArch,
    pub conv_in: Conv2d<S>,
    pub blocks: Vec<EncoderBlock<S>>,
    pub mid: Vec<Conv2d<S>>,
    pub up1: ConvTranspose2d<S>,
    pub mid2: Conv2d<S>,
    pub up2: ConvTranspose2d<S>,
    pub tail1: Conv2d<S>,
    pub tail2: Conv2d<S>,
}

pub struct GenCache<S> {
    x: Array4<S>,
    a0: Array4<S>,
    bcaches: Vec<BlockCache<S>>,
    block_out: Vec<Array4<S>>,
    mid_out: Vec<Array4<S>>,
    up1_out: Array4<S>,
    mid2_out: Array4<S>,
    up2_out: Array4<S>,
    tail1_out: Array4<S>,
    pub y: Array4<S>,
}

fn check_finite<S: Real>(layer: &str, a: &Array4<S>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer.into() })
    }
}

impl<S: Real> Generator<S> {
    /// Deterministic fan-in-scaled initialization from `seed`.
    pub fn init(arch: GeneratorArch, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let conv_in = Conv2d::new(4, 16, 5, 1, 2, &mut rng);
        let blocks = ENCODER_BLOCKS
            .iter()
            .map(|&(cin, cout, stride)| match arch {
                GeneratorArch::Residual => {
                    EncoderBlock::Residual(ResidualBlock::new(cin, cout, stride, &mut rng))
                }
                GeneratorArch::Plain => {
                    EncoderBlock::Plain(Conv2d::new(cin, cout, 3, stride, 1, &mut rng))
                }
            })
            .collect();
        let mid = (0..3).map(|_| Conv2d::new(256, 256, 3, 1, 1, &mut rng)).collect();
        let up1 = ConvTranspose2d::new(256, 128, 4, 2, 1, &mut rng);
        let mid2 = Conv2d::new(128, 128, 3, 1, 1, &mut rng);
        let up2 = ConvTranspose2d::new(128, 64, 4, 2, 1, &mut rng);
        let tail1 = Conv2d::new(64, 32, 3, 1, 1, &mut rng);
        let tail2 = Conv2d::new(32, 3, 3, 1, 1, &mut rng);
        Generator { arch, conv_in, blocks, mid, up1, mid2, up2, tail1, tail2 }
    }

    fn check_input(&self, x: &Array4<S>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != 4 || h != FRAME || w != FRAME {
            return Err(Error::shape(
                "generator input",
                format!("Nx4x{FRAME}x{FRAME}"),
                format!("Nx{c}x{h}x{w}"),
            ));
        }
        Ok(())
    }

    /// Forward pass keeping every activation needed by [`Generator::backward`].
    pub fn forward_train(&self, x: &Array4<S>) -> Result<GenCache<S>> {
        self.check_input(x)?;
        let a0 = self.conv_in.forward(x);
        check_finite("conv_in", &a0)?;
        let mut bcaches = Vec::with_capacity(self.blocks.len());
        let mut block_out = Vec::with_capacity(self.blocks.len());
        let mut cur = a0.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            let (y, c) = b.forward(&cur);
            check_finite(&format!("block{i}"), &y)?;
            bcaches.push(c);
            block_out.push(y.clone());
            cur = y;
        }
        let mut mid_out = Vec::with_capacity(self.mid.len());
        for (i, conv) in self.mid.iter().enumerate() {
            let mut y = conv.forward(&cur);
            relu(&mut y);
            check_finite(&format!("mid{i}"), &y)?;
            mid_out.push(y.clone());
            cur = y;
        }
        let mut up1_out = self.up1.forward(&cur);
        relu(&mut up1_out);
        check_finite("up1", &up1_out)?;
        let mut mid2_out = self.mid2.forward(&up1_out);
        relu(&mut mid2_out);
        check_finite("mid2", &mid2_out)?;
        let mut up2_out = self.up2.forward(&mid2_out);
        relu(&mut up2_out);
        check_finite("up2", &up2_out)?;
        let mut tail1_out = self.tail1.forward(&up2_out);
        relu(&mut tail1_out);
        check_finite("tail1", &tail1_out)?;
        let mut y = self.tail2.forward(&tail1_out);
        check_finite("tail2", &y)?;
        sigmoid(&mut y);
        Ok(GenCache {
            x: x.clone(),
            a0,
            bcaches,
            block_out,
            mid_out,
            up1_out,
            mid2_out,
            up2_out,
            tail1_out,
            y,
        })
    }

    /// Inference-only forward.
    pub fn forward(&self, x: &Array4<S>) -> Result<Array4<S>> {
        Ok(self.forward_train(x)?.y)
    }

    /// Forward while recording one (label, shape) row per architecture
    /// table row, activation rows included.
    pub fn forward_traced(&self, x: &Array4<S>) -> Result<(Array4<S>, Vec<TraceRow>)> {
        let cache = self.forward_train(x)?;
        let shape3 = |a: &Array4<S>| {
            let (_, c, h, w) = a.dim();
            (c, h, w)
        };
        let mut rows: Vec<TraceRow> = Vec::new();
        rows.push(("Conv".into(), shape3(&cache.a0)));
        for (i, b) in self.blocks.iter().enumerate() {
            rows.push((b.trace_label().into(), shape3(&cache.block_out[i])));
        }
        for m in &cache.mid_out {
            rows.push(("Conv".into(), shape3(m)));
            rows.push(("ReLU".into(), shape3(m)));
        }
        rows.push(("Trans-Conv".into(), shape3(&cache.up1_out)));
        rows.push(("ReLU".into(), shape3(&cache.up1_out)));
        rows.push(("Conv".into(), shape3(&cache.mid2_out)));
        rows.push(("ReLU".into(), shape3(&cache.mid2_out)));
        rows.push(("Trans-Conv".into(), shape3(&cache.up2_out)));
        rows.push(("ReLU".into(), shape3(&cache.up2_out)));
        rows.push(("Conv".into(), shape3(&cache.tail1_out)));
        rows.push(("ReLU".into(), shape3(&cache.tail1_out)));
        rows.push(("Conv".into(), shape3(&cache.y)));
        rows.push(("Sigmoid".into(), shape3(&cache.y)));
        Ok((cache.y, rows))
    }

    /// Backprop a gradient on the output frame; accumulates parameter
    /// gradients and returns the gradient on the masked input.
    pub fn backward(&mut self, cache: &GenCache<S>, gy: &Array4<S>) -> Array4<S> {
        let g = sigmoid_backward(&cache.y, gy);
        let g = self.tail2.backward(&cache.tail1_out, &g);
        let g = relu_backward(&cache.tail1_out, &g);
        let g = self.tail1.backward(&cache.up2_out, &g);
        let g = relu_backward(&cache.up2_out, &g);
        let g = self.up2.backward(&cache.mid2_out, &g);
        let g = relu_backward(&cache.mid2_out, &g);
        let g = self.mid2.backward(&cache.up1_out, &g);
        let g = relu_backward(&cache.up1_out, &g);
        let mut g = self.up1.backward(&cache.mid_out[2], &g);
        for i in (0..self.mid.len()).rev() {
            g = relu_backward(&cache.mid_out[i], &g);
            let input = if i == 0 { cache.block_out.last().unwrap() } else { &cache.mid_out[i - 1] };
            g = self.mid[i].backward(input, &g);
        }
        for i in (0..self.blocks.len()).rev() {
            let input = if i == 0 { &cache.a0 } else { &cache.block_out[i - 1] };
            g = self.blocks[i].backward(input, &cache.block_out[i], &cache.bcaches[i], &g);
        }
        self.conv_in.backward(&cache.x, &g)
    }
}

impl<S: Real> HasParams<S> for Generator<S> {
    fn param_slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamSlot<'a, S>>) {
        self.conv_in.param_slots(&format!("{prefix}conv_in."), out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            match b {
                EncoderBlock::Residual(rb) => rb.param_slots(&format!("{prefix}block{i}."), out),
                EncoderBlock::Plain(conv) => conv.param_slots(&format!("{prefix}block{i}."), out),
            }
        }
        for (i, m) in self.mid.iter_mut().enumerate() {
            m.param_slots(&format!("{prefix}mid{i}."), out);
        }
        self.up1.param_slots(&format!("{prefix}up1."), out);
        self.mid2.param_slots(&format!("{prefix}mid2."), out);
        self.up2.param_slots(&format!("{prefix}up2."), out);
        self.tail1.param_slots(&format!("{prefix}tail1."), out);
        self.tail2.param_slots(&format!("{prefix}tail2."), out);
    }
}

/// Expected (label, (C, H, W)) rows for the residual generator, one per
/// architecture table row.
pub fn expected_trace_residual() -> Vec<TraceRow> {
    let mut rows: Vec<TraceRow> = vec![
        ("Conv".into(), (16, 192, 192)),
        ("ResBlock".into(), (128, 96, 96)),
        ("ResBlock".into(), (256, 48, 48)),
        ("ResBlock".into(), (256, 48, 48)),
        ("ResBlock".into(), (256, 48, 48)),
        ("ResBlock".into(), (256, 48, 48)),
    ];
    for _ in 0..3 {
        rows.push(("Conv".into(), (256, 48, 48)));
        rows.push(("ReLU".into(), (256, 48, 48)));
    }
    rows.extend([
        ("Trans-Conv".into(), (128, 96, 96)),
        ("ReLU".into(), (128, 96, 96)),
        ("Conv".into(), (128, 96, 96)),
        ("ReLU".into(), (128, 96, 96)),
        ("Trans-Conv".into(), (64, 192, 192)),
        ("ReLU".into(), (64, 192, 192)),
        ("Conv".into(), (32, 192, 192)),
        ("ReLU".into(), (32, 192, 192)),
        ("Conv".into(), (3, 192, 192)),
        ("Sigmoid".into(), (3, 192, 192)),
    ]);
    rows
}
