// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfa_core::checkpoint::Model;
use tfa_core::codes_io::{save_codes, CodeSet};
use tfa_core::sparsity::codes_from_matrix;

use crate::config;
use crate::failure::Outcome;
use crate::io::{load_checkpoint, load_input, scale_for};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub input: Option<PathBuf>,
    pub layer: Option<i64>,
    pub model: Option<PathBuf>,
}

/// Writes `codes.tfac`: dense predictive plus sparse novel codes for
/// temporal models, sparse codes for SAEs.
pub fn run(cfg: &EncodeConfig, out: &Path) -> Outcome<()> {
    let input = config::required(&cfg.input, "input")?;
    let ckpt = load_checkpoint(&config::required(&cfg.model, "model")?)?;
    let set = scale_for(load_input(&input, cfg.layer)?, &ckpt)?;
    let kind = ckpt.model.kind_name();
    let codes = match &ckpt.model {
        Model::Temporal(m) => CodeSet::from_temporal(kind, m.m(), &m.encode_set(&set)?),
        Model::Sae(m) => {
            let per_seq = set
                .sequences()
                .iter()
                .map(|s| m.encode_batch(s).map(|sel| codes_from_matrix(&sel.codes)))
                .collect::<tfa_core::Result<Vec<_>>>()?;
            CodeSet::from_sparse(kind, m.m(), per_seq)
        }
    };
    save_codes(&codes, out.join("codes.tfac"))?;
    Ok(())
}
