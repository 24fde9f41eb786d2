//! Checkpoint container: a 4-byte magic, a version word, then a bincode
//! body holding every parameter tensor and both optimizer states by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Variant;
use crate::error::{Error, Result};
use crate::nn::HasParams;
use crate::train::{Adam, Models, TrainState};

pub const MAGIC: [u8; 4] = *b"OPCK";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    variant: String,
    seed: u64,
    epoch: u32,
    step: u64,
    gen: Vec<NamedTensor>,
    disc: Vec<NamedTensor>,
    opt_g: Adam,
    opt_d: Adam,
}

fn dump_tensors<M: HasParams<f32>>(model: &mut M) -> Vec<NamedTensor> {
    model
        .collect_slots()
        .iter()
        .map(|s| NamedTensor {
            name: s.name.clone(),
            shape: s.shape.clone(),
            data: s.value.to_vec(),
        })
        .collect()
}

fn restore_tensors<M: HasParams<f32>>(
    model: &mut M,
    tensors: &[NamedTensor],
    what: &str,
) -> Result<()> {
    let mut slots = model.collect_slots();
    if slots.len() != tensors.len() {
        return Err(Error::CheckpointIntegrity(format!(
            "{what}: expected {} tensors, found {}",
            slots.len(),
            tensors.len()
        )));
    }
    for (slot, t) in slots.iter_mut().zip(tensors) {
        if slot.name != t.name {
            return Err(Error::CheckpointIntegrity(format!(
                "{what}: tensor name mismatch ({} vs {})",
                slot.name, t.name
            )));
        }
        if slot.shape != t.shape || slot.value.len() != t.data.len() {
            return Err(Error::CheckpointIntegrity(format!(
                "{what}: shape mismatch for {} ({:?} vs {:?})",
                t.name, slot.shape, t.shape
            )));
        }
        slot.value.copy_from_slice(&t.data);
    }
    Ok(())
}

/// Write `state` to `path`. Takes `&mut` because parameter access goes
/// through the mutable slot API; the state is not modified.
pub fn save_checkpoint(state: &mut TrainState, path: &Path) -> Result<()> {
    let body = Body {
        variant: state.variant.label().to_string(),
        seed: state.seed,
        epoch: state.epoch,
        step: state.step,
        gen: dump_tensors(&mut state.models.gen),
        disc: dump_tensors(&mut state.models.disc),
        opt_g: state.opt_g.clone(),
        opt_d: state.opt_d.clone(),
    };
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bincode::serialize_into(&mut bytes, &body)
        .map_err(|e| Error::CheckpointIntegrity(format!("serialize: {e}")))?;
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a checkpoint back into a fully constructed state. Version
/// mismatches and truncated or renamed tensors fail without producing any
/// partial state.
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || bytes[..4] != MAGIC {
        return Err(Error::CheckpointIntegrity(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if found != VERSION {
        return Err(Error::CheckpointVersion { found, expected: VERSION });
    }
    let body: Body = bincode::deserialize(&bytes[8..])
        .map_err(|e| Error::CheckpointIntegrity(format!("{}: {e}", path.display())))?;
    let variant: Variant = body.variant.parse()?;
    let mut models = Models::init(variant, body.seed);
    restore_tensors(&mut models.gen, &body.gen, "generator")?;
    restore_tensors(&mut models.disc, &body.disc, "discriminator")?;
    Ok(TrainState {
        variant,
        seed: body.seed,
        epoch: body.epoch,
        step: body.step,
        models,
        opt_g: body.opt_g,
        opt_d: body.opt_d,
    })
}
