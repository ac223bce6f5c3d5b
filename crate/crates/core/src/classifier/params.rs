//! Named parameter storage for the classifier.
//!
//! Trainable stores hand out `Var`s registered in a `VarMap` (so the
//! optimizer and safetensors export see them); frozen stores hand out plain
//! tensors loaded from an artifact. Fresh parameters are initialised from a
//! ChaCha stream keyed by (seed, parameter name), so initialisation is
//! reproducible and independent of construction order.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::VarMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fingerprint::sample_seed;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal(0, std) truncated to ±2 std.
    TruncNormal(f64),
}

enum Mode {
    Trainable {
        vars: VarMap,
        seed: u64,
        /// Pretrained values; parameters under `fresh_prefix` ignore them.
        pretrained: Option<HashMap<String, Tensor>>,
        fresh_prefix: &'static str,
    },
    Frozen(HashMap<String, Tensor>),
}

pub struct ParamStore {
    mode: Mode,
    device: Device,
}

impl ParamStore {
    pub fn trainable(seed: u64, device: &Device) -> Self {
        Self {
            mode: Mode::Trainable {
                vars: VarMap::new(),
                seed,
                pretrained: None,
                fresh_prefix: "",
            },
            device: device.clone(),
        }
    }

    /// Trainable store seeded from a pretrained checkpoint. Every parameter
    /// must be present in the checkpoint with a matching shape, except those
    /// whose names start with `fresh_prefix` (the new classification head).
    pub fn fine_tune(checkpoint: &Path, fresh_prefix: &'static str, seed: u64, device: &Device) -> Result<Self> {
        let pretrained = load_safetensors(checkpoint, device)?;
        Ok(Self {
            mode: Mode::Trainable {
                vars: VarMap::new(),
                seed,
                pretrained: Some(pretrained),
                fresh_prefix,
            },
            device: device.clone(),
        })
    }

    pub fn frozen(weights: &Path, device: &Device) -> Result<Self> {
        Ok(Self {
            mode: Mode::Frozen(load_safetensors(weights, device)?),
            device: device.clone(),
        })
    }

    pub fn from_tensors(tensors: HashMap<String, Tensor>, device: &Device) -> Self {
        Self {
            mode: Mode::Frozen(tensors),
            device: device.clone(),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn var_map(&self) -> Option<&VarMap> {
        match &self.mode {
            Mode::Trainable { vars, .. } => Some(vars),
            Mode::Frozen(_) => None,
        }
    }

    pub fn get(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        match &self.mode {
            Mode::Frozen(map) => {
                let t = map
                    .get(name)
                    .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor `{name}`")))?;
                check_shape(name, t, shape)?;
                Ok(t.to_dtype(DType::F32)?)
            }
            Mode::Trainable {
                vars,
                seed,
                pretrained,
                fresh_prefix,
            } => {
                let value = match pretrained {
                    Some(map) if fresh_prefix.is_empty() || !name.starts_with(fresh_prefix) => {
                        let t = map.get(name).ok_or_else(|| {
                            Error::CheckpointMismatch(format!("checkpoint lacks `{name}`"))
                        })?;
                        check_shape(name, t, shape)?;
                        t.to_dtype(DType::F32)?
                    }
                    _ => init_tensor(name, shape, init, *seed, &self.device)?,
                };
                let var = Var::from_tensor(&value)?;
                let tensor = var.as_tensor().clone();
                vars.data().lock().unwrap().insert(name.to_string(), var);
                Ok(tensor)
            }
        }
    }
}

fn check_shape(name: &str, t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.dims() != shape {
        return Err(Error::CheckpointMismatch(format!(
            "`{name}` has shape {:?}, model expects {shape:?}",
            t.dims()
        )));
    }
    Ok(())
}

fn load_safetensors(path: &Path, device: &Device) -> Result<HashMap<String, Tensor>> {
    if !path.is_file() {
        return Err(Error::CheckpointMismatch(format!(
            "weights file {} does not exist",
            path.display()
        )));
    }
    candle_core::safetensors::load(path, device)
        .map_err(|e| Error::CheckpointMismatch(format!("{}: {e}", path.display())))
}

fn init_tensor(name: &str, shape: &[usize], init: Init, seed: u64, device: &Device) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = match init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::TruncNormal(std) => {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, 0, name));
            let normal = Normal::new(0.0, std).expect("finite std");
            (0..n)
                .map(|_| loop {
                    let v: f64 = normal.sample(&mut rng);
                    if v.abs() <= 2.0 * std {
                        break v as f32;
                    }
                })
                .collect()
        }
    };
    Ok(Tensor::from_vec(data, shape, device)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_keyed_by_name_not_order() {
        let dev = Device::Cpu;
        let a = ParamStore::trainable(3, &dev);
        let x1 = a.get("x", &[4], Init::TruncNormal(0.02)).unwrap();
        let y1 = a.get("y", &[4], Init::TruncNormal(0.02)).unwrap();
        let b = ParamStore::trainable(3, &dev);
        let y2 = b.get("y", &[4], Init::TruncNormal(0.02)).unwrap();
        let x2 = b.get("x", &[4], Init::TruncNormal(0.02)).unwrap();
        assert_eq!(x1.to_vec1::<f32>().unwrap(), x2.to_vec1::<f32>().unwrap());
        assert_eq!(y1.to_vec1::<f32>().unwrap(), y2.to_vec1::<f32>().unwrap());
        assert_ne!(x1.to_vec1::<f32>().unwrap(), y1.to_vec1::<f32>().unwrap());
        assert!(x1.to_vec1::<f32>().unwrap().iter().all(|v| v.abs() <= 0.04));
    }

    #[test]
    fn frozen_store_reports_missing_and_misshaped() {
        let dev = Device::Cpu;
        let mut map = HashMap::new();
        map.insert("w".to_string(), Tensor::zeros((2, 3), DType::F32, &dev).unwrap());
        let store = ParamStore::from_tensors(map, &dev);
        assert!(store.get("w", &[2, 3], Init::Zeros).is_ok());
        assert!(matches!(store.get("w", &[3, 2], Init::Zeros), Err(Error::CheckpointMismatch(_))));
        assert!(matches!(store.get("v", &[1], Init::Zeros), Err(Error::CheckpointMismatch(_))));
    }
}
