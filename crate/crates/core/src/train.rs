//! Alternating GAN training: a discriminator step on least-squares
//! real/fake targets, then a generator step against the updated
//! discriminator.

use std::fs::File;
use std::io::{BufWriter, Write};

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::config::{TrainConfig, Variant};
use crate::data::{iterate_batches, local_crop_batch, Batch, DatasetManifest, Mask, Split};
use crate::discriminator::{DiscPair, DiscWiring};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::nn::{HasParams, ParamSlot};
use crate::objectives::{
    adv_loss_gen, adv_loss_gen_grad, disc_loss, disc_loss_grads, rec_loss, rec_loss_grad,
    LossWeights,
};

/// Seed-stream tags so the generator, the discriminators, and the shuffle
/// never share an RNG stream.
const GEN_SEED_TAG: u64 = 0x4745_4E5F_494E_4954;
const DISC_SEED_TAG: u64 = 0x4449_5343_5F49_4E49;

pub fn gen_seed(seed: u64) -> u64 {
    seed ^ GEN_SEED_TAG
}

pub fn disc_seed(seed: u64) -> u64 {
    seed ^ DISC_SEED_TAG
}

/// Adam with bias correction; moments live here so checkpoints capture
/// them exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Adam {
        Adam { lr, beta1, beta2, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, slots: &mut [ParamSlot<'_, f32>]) {
        if self.m.is_empty() {
            self.m = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
            self.v = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
        }
        assert_eq!(self.m.len(), slots.len(), "optimizer state does not match parameter slots");
        self.t += 1;
        let b1 = self.beta1 as f32;
        let b2 = self.beta2 as f32;
        let bc1 = 1.0 - (self.beta1).powi(self.t as i32) as f32;
        let bc2 = 1.0 - (self.beta2).powi(self.t as i32) as f32;
        let lr = self.lr as f32;
        let eps = self.eps as f32;
        for (si, slot) in slots.iter_mut().enumerate() {
            let m = &mut self.m[si];
            let v = &mut self.v[si];
            for i in 0..slot.value.len() {
                let g = slot.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                slot.value[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Generator plus discriminator ensemble for one variant.
pub struct Models {
    pub gen: Generator<f32>,
    pub disc: DiscPair<f32>,
}

impl Models {
    pub fn init(variant: Variant, seed: u64) -> Models {
        Models {
            gen: Generator::init(variant.generator_arch(), gen_seed(seed)),
            disc: DiscPair::init(variant.disc_wiring(), disc_seed(seed)),
        }
    }
}

/// Everything that must survive a checkpoint round trip. `epoch` is the
/// last completed epoch (0 before training starts).
pub struct TrainState {
    pub variant: Variant,
    pub seed: u64,
    pub epoch: u32,
    pub step: u64,
    pub models: Models,
    pub opt_g: Adam,
    pub opt_d: Adam,
}

impl TrainState {
    pub fn init(cfg: &TrainConfig) -> TrainState {
        TrainState {
            variant: cfg.variant,
            seed: cfg.seed,
            epoch: 0,
            step: 0,
            models: Models::init(cfg.variant, cfg.seed),
            opt_g: Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2),
            opt_d: Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2),
        }
    }
}

/// Losses of one step, evaluated before either parameter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub loss_g: f64,
    pub loss_d: f64,
    pub loss_rec: f64,
    pub loss_adv: f64,
    pub lambda_adv: f64,
}

fn check_finite_loss(name: &str, v: f64, step: u64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { name: name.into(), step })
    }
}

/// One alternating update on a batch. The discriminator is updated first
/// from the pre-update scores; the generator then trains against the
/// updated discriminator. When λ_adv is zero the adversarial path is
/// skipped entirely and the discriminators are untouched.
pub fn train_step(
    state: &mut TrainState,
    batch: &Batch,
    mask: &Mask,
    weights: &LossWeights,
    epoch: u32,
) -> Result<StepLosses> {
    let lam_adv = weights.lambda_adv(epoch)?;
    let lam_rec = weights.lambda_rec;
    let dual = state.models.disc.wiring == DiscWiring::Dual;
    let half = if dual { 0.5f32 } else { 1.0 };

    let gcache = state.models.gen.forward_train(&batch.masked)?;
    let fake = gcache.y.clone();

    let l_rec = rec_loss(&batch.gt, &fake)?;
    check_finite_loss("loss_rec", l_rec, state.step)?;

    let mut l_adv = 0.0;
    let mut l_d = 0.0;
    if lam_adv > 0.0 {
        // ---- discriminator phase (generator output detached)
        let g_real = state.models.disc.global.forward_train(&batch.gt)?;
        let g_fake = state.models.disc.global.forward_train(&fake)?;
        let local_pair = if dual {
            let local = state.models.disc.local.as_ref().expect("dual wiring");
            let real_crop = local_crop_batch(&batch.gt, mask)?;
            let fake_crop = local_crop_batch(&fake, mask)?;
            Some((local.forward_train(&real_crop)?, local.forward_train(&fake_crop)?))
        } else {
            None
        };
        let (comb_r, comb_f) = match &local_pair {
            Some((lr, lf)) => (
                (&g_real.scores + &lr.scores) / 2.0,
                (&g_fake.scores + &lf.scores) / 2.0,
            ),
            None => (g_real.scores.clone(), g_fake.scores.clone()),
        };
        l_d = disc_loss(&comb_r, &comb_f);
        l_adv = adv_loss_gen(&comb_f);
        check_finite_loss("loss_d", l_d, state.step)?;
        check_finite_loss("loss_adv", l_adv, state.step)?;

        let (gr, gf) = disc_loss_grads(&comb_r, &comb_f);
        let gr = gr.mapv(|v| v * half);
        let gf = gf.mapv(|v| v * half);
        state.models.disc.zero_grads();
        state.models.disc.global.backward(&g_real, &gr);
        state.models.disc.global.backward(&g_fake, &gf);
        if let Some((lr_cache, lf_cache)) = &local_pair {
            let local = state.models.disc.local.as_mut().expect("dual wiring");
            local.backward(lr_cache, &gr);
            local.backward(lf_cache, &gf);
        }
        state.opt_d.step(&mut state.models.disc.collect_slots());
    }

    // ---- generator phase
    let mut g_out: Array4<f32> =
        rec_loss_grad(&batch.gt, &fake)?.mapv(|v| v * lam_rec as f32);
    if lam_adv > 0.0 {
        // fresh scores from the just-updated discriminator
        let g_fake = state.models.disc.global.forward_train(&fake)?;
        let local_fake = if dual {
            let local = state.models.disc.local.as_ref().expect("dual wiring");
            let fake_crop = local_crop_batch(&fake, mask)?;
            Some(local.forward_train(&fake_crop)?)
        } else {
            None
        };
        let comb = match &local_fake {
            Some(lf) => (&g_fake.scores + &lf.scores) / 2.0,
            None => g_fake.scores.clone(),
        };
        let ga = adv_loss_gen_grad(&comb).mapv(|v| v * half);
        state.models.disc.zero_grads();
        let mut g_adv = state.models.disc.global.backward(&g_fake, &ga);
        if let Some(lf_cache) = &local_fake {
            let local = state.models.disc.local.as_mut().expect("dual wiring");
            let g_crop = local.backward(lf_cache, &ga);
            // the local operand is mask ⊙ fake, so chain through the mask
            g_adv = g_adv + local_crop_batch(&g_crop, mask)?;
        }
        state.models.disc.zero_grads();
        g_out.zip_mut_with(&g_adv, |o, &a| *o += a * lam_adv as f32);
    }
    state.models.gen.zero_grads();
    state.models.gen.backward(&gcache, &g_out);
    state.opt_g.step(&mut state.models.gen.collect_slots());

    state.step += 1;
    let loss_g = lam_rec * l_rec + lam_adv * l_adv;
    check_finite_loss("loss_g", loss_g, state.step - 1)?;
    Ok(StepLosses { loss_g, loss_d: l_d, loss_rec: l_rec, loss_adv: l_adv, lambda_adv: lam_adv })
}

/// Per-epoch means of the per-step losses.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub steps: u64,
    pub mean_g: f64,
    pub mean_d: f64,
    pub mean_rec: f64,
    pub mean_adv: f64,
    pub lambda_adv: f64,
}

pub const HISTORY_HEADER: &str = "epoch,step,loss_g,loss_d,loss_rec,loss_adv,lambda_adv";

/// Train from scratch per `cfg`. Returns the final state and the per-epoch
/// history; the per-step history lands in `checkpoint_dir/history.csv`.
pub fn fit(cfg: &TrainConfig) -> Result<(TrainState, Vec<EpochStats>)> {
    cfg.validate()?;
    let state = TrainState::init(cfg);
    fit_from(cfg, state)
}

/// Continue a run from a restored state (e.g. a loaded checkpoint).
pub fn fit_from(cfg: &TrainConfig, state: TrainState) -> Result<(TrainState, Vec<EpochStats>)> {
    cfg.validate()?;
    if state.variant != cfg.variant {
        return Err(Error::Config(format!(
            "checkpoint variant {} does not match configured variant {}",
            state.variant, cfg.variant
        )));
    }
    let data_dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("data_dir is required for training".into()))?;
    let manifest = DatasetManifest::scan(data_dir, Split::Train)?;
    if manifest.is_empty() {
        return Err(Error::Config(format!(
            "no images found under {}",
            data_dir.display()
        )));
    }
    let mask = Mask::band_with_margin(cfg.outer_size, cfg.inner_size, cfg.inward_margin)?;
    fit_loop(cfg, state, &manifest, &mask)
}

pub fn fit_loop(
    cfg: &TrainConfig,
    mut state: TrainState,
    manifest: &DatasetManifest,
    mask: &Mask,
) -> Result<(TrainState, Vec<EpochStats>)> {
    std::fs::create_dir_all(&cfg.checkpoint_dir).map_err(|e| Error::io(&cfg.checkpoint_dir, e))?;
    let hist_path = cfg.checkpoint_dir.join("history.csv");
    let fresh = !hist_path.exists()
        || std::fs::metadata(&hist_path).map(|m| m.len() == 0).unwrap_or(true);
    let file = File::options()
        .create(true)
        .append(true)
        .open(&hist_path)
        .map_err(|e| Error::io(&hist_path, e))?;
    let mut hist = BufWriter::new(file);
    if fresh {
        writeln!(hist, "{HISTORY_HEADER}").map_err(|e| Error::io(&hist_path, e))?;
    }

    let weights = cfg.loss_weights();
    let mut stats = Vec::new();
    for epoch in (state.epoch + 1)..=cfg.epochs {
        let mut sums = [0.0f64; 4];
        let mut steps = 0u64;
        let mut lam = 0.0;
        for batch in iterate_batches(manifest, mask, cfg.batch_size, cfg.seed, epoch)? {
            let batch = batch?;
            let l = train_step(&mut state, &batch, mask, &weights, epoch)?;
            writeln!(
                hist,
                "{},{},{},{},{},{},{}",
                epoch, state.step - 1, l.loss_g, l.loss_d, l.loss_rec, l.loss_adv, l.lambda_adv
            )
            .map_err(|e| Error::io(&hist_path, e))?;
            sums[0] += l.loss_g;
            sums[1] += l.loss_d;
            sums[2] += l.loss_rec;
            sums[3] += l.loss_adv;
            lam = l.lambda_adv;
            steps += 1;
        }
        hist.flush().map_err(|e| Error::io(&hist_path, e))?;
        state.epoch = epoch;
        let n = steps as f64;
        stats.push(EpochStats {
            epoch,
            steps,
            mean_g: sums[0] / n,
            mean_d: sums[1] / n,
            mean_rec: sums[2] / n,
            mean_adv: sums[3] / n,
            lambda_adv: lam,
        });
        if epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs {
            let path = cfg.checkpoint_dir.join(format!("epoch_{epoch:04}.ckpt"));
            crate::checkpoint::save_checkpoint(&mut state, &path)?;
        }
    }
    let final_path = cfg.checkpoint_dir.join("final.ckpt");
    crate::checkpoint::save_checkpoint(&mut state, &final_path)?;
    Ok((state, stats))
}

/// Convenience used by tests: the flattened generator parameter vector.
pub fn flatten_params<M: HasParams<f32>>(model: &mut M) -> Vec<f32> {
    model
        .collect_slots()
        .iter()
        .flat_map(|s| s.value.iter().copied())
        .collect()
}
