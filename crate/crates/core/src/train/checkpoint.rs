use std::fs;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::AdamW;
use crate::nn::{Model, NetConfig, ParamSet};
use crate::rng::{self, Rng};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GCKP";
const VERSION: u32 = 1;

/// Everything needed to resume optimisation: parameters, optimiser
/// moments, step counter, random stream and the best validation error.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub optimizer: AdamW,
    pub rng: Rng,
    pub best_val_mre: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    net: NetConfig,
    weight_decay: f64,
    step: u64,
    best_val_mre_bits: Option<u64>,
    rng_seed: String,
    rng_stream: u64,
    rng_word_pos: String,
    tensors: Vec<(String, usize)>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(text: &str) -> Option<[u8; 32]> {
    if text.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (k, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(text.get(2 * k..2 * k + 2)?, 16).ok()?;
    }
    Some(out)
}

impl TrainState {
    /// Freshly initialised parameters and an empty optimiser.
    pub fn new(net: NetConfig, seed: u64, weight_decay: f64) -> Result<Self> {
        let model = Model::new(net, seed)?;
        let optimizer = AdamW::new(&model, weight_decay);
        Ok(TrainState {
            model,
            optimizer,
            rng: rng::stream(seed, "train"),
            best_val_mre: None,
        })
    }

    /// Optimisation steps taken so far.
    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.model.named_tensors();
        let header = Header {
            net: self.model.config.clone(),
            weight_decay: self.optimizer.weight_decay,
            step: self.optimizer.step,
            best_val_mre_bits: self.best_val_mre.map(f64::to_bits),
            rng_seed: hex(&self.rng.get_seed()),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
            tensors: tensors.iter().map(|t| (t.name.clone(), t.values.len())).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let floats = 3 * self.model.parameter_count();
        let mut out = Vec::with_capacity(12 + json.len() + 4 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let groups = [
            tensors.iter().map(|t| t.values).collect::<Vec<_>>(),
            self.optimizer.m.iter().map(Vec::as_slice).collect(),
            self.optimizer.v.iter().map(Vec::as_slice).collect(),
        ];
        for group in groups {
            for v in group.into_iter().flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Binary(format!("GCKP: {m}"));
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("missing magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| bad(e.to_string()))?;
        let mut model = Model::<f32>::new(header.net, 0)?;
        let expected: Vec<(String, usize)> = model
            .named_tensors()
            .iter()
            .map(|t| (t.name.clone(), t.values.len()))
            .collect();
        if expected != header.tensors {
            return Err(bad("tensor layout does not match the network configuration".into()));
        }
        let count: usize = expected.iter().map(|(_, n)| n).sum();
        let body = &bytes[12 + len..];
        if body.len() != 12 * count {
            return Err(bad(format!("expected {} payload bytes, found {}", 12 * count, body.len())));
        }
        let mut floats = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        for t in model.named_tensors_mut() {
            for (dst, src) in t.values.iter_mut().zip(floats.by_ref()) {
                *dst = src;
            }
        }
        let mut optimizer = AdamW::new(&model, header.weight_decay);
        for moments in [&mut optimizer.m, &mut optimizer.v] {
            for dst in moments.iter_mut().flatten() {
                *dst = floats.next().expect("length checked");
            }
        }
        optimizer.step = header.step;
        let seed = unhex(&header.rng_seed).ok_or_else(|| bad("bad random seed".into()))?;
        let word_pos: u128 = header
            .rng_word_pos
            .parse()
            .map_err(|_| bad("bad random stream position".into()))?;
        let mut rng = Rng::from_seed(seed);
        rng.set_stream(header.rng_stream);
        rng.set_word_pos(word_pos);
        Ok(TrainState {
            model,
            optimizer,
            rng,
            best_val_mre: header.best_val_mre_bits.map(f64::from_bits),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
