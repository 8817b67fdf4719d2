//! Stored posterior draws of a full-data fit, chain-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DrawBank {
    pub param_names: Vec<String>,
    pub chains: usize,
    pub draws_per_chain: usize,
    /// Row-major `(chains * draws_per_chain) x dim`, chain by chain.
    pub values: Vec<f64>,
}

/// Sidecar metadata for the binary draw file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub draws: usize,
    pub dim: usize,
    pub chains: usize,
    pub param_names: Vec<String>,
}

impl DrawBank {
    pub fn new(param_names: Vec<String>, chains: usize, draws_per_chain: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != chains * draws_per_chain * param_names.len() {
            return Err(Error::invalid(format!(
                "{} values for {chains} chains x {draws_per_chain} draws x {} parameters",
                values.len(),
                param_names.len()
            )));
        }
        Ok(DrawBank {
            param_names,
            chains,
            draws_per_chain,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn len(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    /// Draws of parameter `j` in chain `l`.
    pub fn trace(&self, l: usize, j: usize) -> Vec<f64> {
        let start = l * self.draws_per_chain;
        (start..start + self.draws_per_chain).map(|i| self.get(i)[j]).collect()
    }

    /// Writes `<stem>.draws.bin` (little-endian f64) and `<stem>.draws.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(format!("{stem}.draws.bin")), bytes)?;
        let meta = DrawMeta {
            draws: self.len(),
            dim: self.dim(),
            chains: self.chains,
            param_names: self.param_names.clone(),
        };
        fs::write(dir.join(format!("{stem}.draws.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: DrawMeta = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.draws.json")))?)?;
        let bytes = fs::read(dir.join(format!("{stem}.draws.bin")))?;
        if bytes.len() != meta.draws * meta.dim * 8 {
            return Err(Error::invalid(format!(
                "draw file has {} bytes, expected {}",
                bytes.len(),
                meta.draws * meta.dim * 8
            )));
        }
        if meta.chains == 0 || meta.draws % meta.chains != 0 {
            return Err(Error::invalid("draw count is not a multiple of the chain count"));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        DrawBank::new(meta.param_names, meta.chains, meta.draws / meta.chains, values)
    }
}
