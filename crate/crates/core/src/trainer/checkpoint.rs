//! Training checkpoints. Layout, all little-endian:
//!
//! ```text
//! "GGAN" u32-version "TRNS"
//! blob   config JSON
//! blob   subset JSON
//! u64    completed epochs
//! [32]   rng seed, u64 rng stream, u128 rng word position
//! block  generator parameters      (see nn::checkpoint)
//! block  discriminator parameters
//! adam   generator optimizer:     4 x f64 config, u64 t, m tensors, v tensors
//! adam   discriminator optimizer
//! u64    history length, then per epoch: u64 epoch, 5 x f64
//! ```
//!
//! Encoding is a pure function of the state, so save → load → save is
//! byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EpochRecord, TrainConfig, TrainState};
use crate::model::{GganModel, Network};
use crate::nn::checkpoint::{read_parameters, write_parameters, BinReader, BinWriter};
use crate::nn::{AdamConfig, AdamState, NetworkSpec, NnError, ParameterSet};
use crate::snp::SnpSubset;

const SECTION: &[u8; 4] = b"TRNS";

type Result<T> = std::result::Result<T, NnError>;

pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let mut w = BinWriter::new(Vec::new());
    w.header()?;
    w.bytes(SECTION)?;
    w.blob(serde_json::to_string(&state.config)?.as_bytes())?;
    w.blob(serde_json::to_string(&state.subset)?.as_bytes())?;
    w.u64(state.epoch as u64)?;
    w.bytes(&state.rng.get_seed())?;
    w.u64(state.rng.get_stream())?;
    w.u128(state.rng.get_word_pos())?;
    let (g, d) = (&state.model.generator, &state.model.discriminator);
    write_parameters(&mut w, &g.spec, &g.params)?;
    write_parameters(&mut w, &d.spec, &d.params)?;
    write_adam(&mut w, &state.gen_opt)?;
    write_adam(&mut w, &state.disc_opt)?;
    w.u64(state.history.len() as u64)?;
    for r in &state.history {
        w.u64(r.epoch as u64)?;
        for v in [r.l_sup, r.l_unsup, r.l_gen, r.acc_sup, r.acc_unsup] {
            w.f64(v)?;
        }
    }
    Ok(w.into_inner())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let mut r = BinReader::new(bytes);
    r.header()?;
    if &r.bytes::<4>()? != SECTION {
        return Err(NnError::Corrupt("not a training checkpoint".into()));
    }
    let config: TrainConfig = serde_json::from_slice(&r.blob()?)?;
    let subset: SnpSubset = serde_json::from_slice(&r.blob()?)?;
    let epoch = r.u64()? as usize;
    let mut rng = ChaCha8Rng::from_seed(r.bytes::<32>()?);
    rng.set_stream(r.u64()?);
    rng.set_word_pos(r.u128()?);

    let (gspec, gparams) = read_parameters(&mut r, None)?;
    let (dspec, dparams) = read_parameters(&mut r, None)?;
    let model = GganModel::from_networks(
        Network {
            spec: gspec,
            params: gparams,
        },
        Network {
            spec: dspec,
            params: dparams,
        },
    )
    .map_err(|e| NnError::Corrupt(e.to_string()))?;
    if model.n_snps != subset.len() {
        return Err(NnError::Corrupt("subset size differs from model input".into()));
    }
    let gen_opt = read_adam(&mut r, &model.generator.spec)?;
    let disc_opt = read_adam(&mut r, &model.discriminator.spec)?;

    let n = r.length()?;
    let mut history = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        history.push(EpochRecord {
            epoch: r.u64()? as usize,
            l_sup: r.f64()?,
            l_unsup: r.f64()?,
            l_gen: r.f64()?,
            acc_sup: r.f64()?,
            acc_unsup: r.f64()?,
        });
    }
    r.finish()?;
    Ok(TrainState {
        config,
        subset,
        model,
        gen_opt,
        disc_opt,
        epoch,
        rng,
        history,
    })
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(state)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    decode_checkpoint(&std::fs::read(path)?)
}

fn write_adam<W: Write>(w: &mut BinWriter<W>, s: &AdamState) -> Result<()> {
    let c = s.config;
    for v in [c.lr, c.beta1, c.beta2, c.epsilon] {
        w.f64(v)?;
    }
    w.u64(s.t)?;
    for t in s.m.tensors().chain(s.v.tensors()) {
        w.tensor(t)?;
    }
    Ok(())
}

fn read_adam<R: Read>(r: &mut BinReader<R>, spec: &NetworkSpec) -> Result<AdamState> {
    let config = AdamConfig {
        lr: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
    };
    let t = r.u64()?;
    let mut m = ParameterSet::zeros(spec)?;
    let mut v = ParameterSet::zeros(spec)?;
    for slot in m.tensors_mut().chain(v.tensors_mut()) {
        let read = r.tensor()?;
        if read.shape() != slot.shape() {
            return Err(NnError::Corrupt("optimizer moment shape differs from spec".into()));
        }
        *slot = read;
    }
    Ok(AdamState { config, t, m, v })
}
