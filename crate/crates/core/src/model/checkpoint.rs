//! Checkpoint format: JSON with the config, the vocabulary, every named
//! tensor with its shape, and the bias table as explicit index-to-value
//! pairs (so a clip-bound change between writer and reader fails loudly
//! instead of misreading slots).

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::bias::{BiasKind, SELECTED_KINDS};
use super::config::ModelConfig;
use super::net::Model;
use super::vocab::Vocab;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

/// One head's table as explicit (semantic index, value) pairs.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BiasEntries {
    /// (path length, level difference, value) triples per head.
    Full(Vec<Vec<(i64, i64, f64)>>),
    /// (relation name, value) pairs per head.
    Selected(Vec<Vec<(String, f64)>>),
    /// (signed distance, value) pairs per head.
    Linear(Vec<Vec<(i64, f64)>>),
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    config: ModelConfig,
    vocab: Vec<String>,
    tensors: Vec<TensorRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias_table: Option<BiasEntries>,
}

pub fn save(model: &Model, vocab: &Vocab, path: &Path) -> Result<()> {
    let bias_idx = model.bias_table_tensor_index();
    let tensors = model
        .store
        .tensors()
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != bias_idx)
        .map(|(_, t)| TensorRecord {
            name: t.name.clone(),
            shape: [t.data.nrows(), t.data.ncols()],
            data: t.data.iter().copied().collect(),
        })
        .collect();
    let bias_table = model.bias_table().map(|table| {
        let clip = table.clip;
        match table.kind {
            BiasKind::Full => BiasEntries::Full(
                (0..table.heads())
                    .map(|h| {
                        let mut entries = Vec::new();
                        for p in -clip.path..=clip.path {
                            for l in -clip.lvl..=clip.lvl {
                                entries.push((p, l, table.values[[h, table.full_slot(p, l)]]));
                            }
                        }
                        entries
                    })
                    .collect(),
            ),
            BiasKind::Selected => BiasEntries::Selected(
                (0..table.heads())
                    .map(|h| {
                        SELECTED_KINDS
                            .iter()
                            .enumerate()
                            .map(|(s, kind)| (kind.name().to_string(), table.values[[h, s]]))
                            .collect()
                    })
                    .collect(),
            ),
            BiasKind::TokenLinear | BiasKind::SectionLinear => BiasEntries::Linear(
                (0..table.heads())
                    .map(|h| {
                        (-clip.linear..=clip.linear)
                            .map(|d| (d, table.values[[h, (d + clip.linear) as usize]]))
                            .collect()
                    })
                    .collect(),
            ),
        }
    });
    let file = CheckpointFile {
        config: model.config.clone(),
        vocab: vocab.tokens().to_vec(),
        tensors,
        bias_table,
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, Vocab)> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    let mut model = Model::new(file.config)?;
    let bias_idx = model.bias_table_tensor_index();

    for record in &file.tensors {
        let idx = model.store.find(&record.name).ok_or_else(|| {
            Error::Config(format!("checkpoint tensor {:?} not in this model", record.name))
        })?;
        let target = model.store.get_mut(idx);
        if target.dim() != (record.shape[0], record.shape[1]) {
            return Err(Error::Shape(format!(
                "tensor {:?}: checkpoint {:?} vs model {:?}",
                record.name,
                record.shape,
                target.dim()
            )));
        }
        *target = Array2::from_shape_vec((record.shape[0], record.shape[1]), record.data.clone())
            .map_err(|e| Error::Shape(e.to_string()))?;
    }

    match (bias_idx, file.bias_table) {
        (Some(idx), Some(entries)) => {
            let clip = model.config.clip;
            let table = model.bias_table().unwrap();
            let mut values = model.store.get(idx).clone();
            let out_of_range = |what: String| {
                Error::Config(format!("bias entry {what} outside the configured clip bounds"))
            };
            match entries {
                BiasEntries::Full(heads) => {
                    check_heads(heads.len(), values.nrows())?;
                    for (h, list) in heads.iter().enumerate() {
                        for &(p, l, v) in list {
                            if p.abs() > clip.path || l.abs() > clip.lvl {
                                return Err(out_of_range(format!("({p}, {l})")));
                            }
                            values[[h, table.full_slot(p, l)]] = v;
                        }
                    }
                }
                BiasEntries::Selected(heads) => {
                    check_heads(heads.len(), values.nrows())?;
                    for (h, list) in heads.iter().enumerate() {
                        for (name, v) in list {
                            let slot = SELECTED_KINDS
                                .iter()
                                .position(|k| k.name() == name)
                                .ok_or_else(|| out_of_range(name.clone()))?;
                            values[[h, slot]] = *v;
                        }
                    }
                }
                BiasEntries::Linear(heads) => {
                    check_heads(heads.len(), values.nrows())?;
                    for (h, list) in heads.iter().enumerate() {
                        for &(d, v) in list {
                            if d.abs() > clip.linear {
                                return Err(out_of_range(format!("distance {d}")));
                            }
                            values[[h, (d + clip.linear) as usize]] = v;
                        }
                    }
                }
            }
            *model.store.get_mut(idx) = values;
        }
        (None, None) => {}
        (Some(_), None) => {
            return Err(Error::Config("checkpoint is missing the bias table".into()))
        }
        (None, Some(_)) => {
            return Err(Error::Config(
                "checkpoint carries a bias table but the placement is none".into(),
            ))
        }
    }

    Ok((model, Vocab::from_tokens(file.vocab)))
}

fn check_heads(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Shape(format!(
            "bias table has {found} heads, model expects {expected}"
        )));
    }
    Ok(())
}
