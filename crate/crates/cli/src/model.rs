//! Self-describing JSON model file.

use std::path::Path;

use invmap::nn::{LayerSpec, Mlp};
use invmap::{AmortNet, ProblemSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFile {
    pub layers: Vec<LayerSpec>,
    /// Flat parameters: per layer, row-major weights then bias.
    pub params: Vec<f64>,
}

impl HeadFile {
    fn from_mlp(mlp: &Mlp) -> Self {
        Self {
            layers: mlp.spec().to_vec(),
            params: mlp.flatten(),
        }
    }

    fn to_mlp(&self) -> CliResult<Mlp> {
        Ok(Mlp::from_flat(&self.layers, &self.params)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heads {
    pub mu: HeadFile,
    pub diag: HeadFile,
    /// Absent when `d = 1`.
    pub offdiag: Option<HeadFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub problem: ProblemSpec,
    pub d: usize,
    pub m: usize,
    pub heads: Heads,
    pub train: TrainConfig,
    pub seed: u64,
}

impl ModelFile {
    pub fn new(problem: ProblemSpec, net: &AmortNet, train: TrainConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            problem,
            d: net.param_dim(),
            m: net.data_dim(),
            heads: Heads {
                mu: HeadFile::from_mlp(net.head_mu()),
                diag: HeadFile::from_mlp(net.head_diag()),
                offdiag: net.head_offdiag().map(HeadFile::from_mlp),
            },
            seed: train.seed,
            train,
        }
    }

    pub fn network(&self) -> CliResult<AmortNet> {
        let offdiag = self.heads.offdiag.as_ref().map(HeadFile::to_mlp).transpose()?;
        Ok(AmortNet::from_heads(
            self.d,
            self.m,
            self.heads.mu.to_mlp()?,
            self.heads.diag.to_mlp()?,
            offdiag,
        )?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let model: ModelFile = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed model file: {e}")))?;
        if model.format_version != FORMAT_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported model format_version {} (expected {FORMAT_VERSION})",
                model.format_version
            )));
        }
        let p = model.problem.build()?;
        if p.param_dim() != model.d || p.data_dim() != model.m {
            return Err(CliError::Usage(format!(
                "model dims d={}, m={} do not match problem {} (d={}, m={})",
                model.d,
                model.m,
                model.problem.name(),
                p.param_dim(),
                p.data_dim()
            )));
        }
        model.network()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        io::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_json(&io::read_to_string(path)?)
    }
}
