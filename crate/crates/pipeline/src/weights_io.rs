//! Weight serialization: one binary tensor file per parameter matrix plus a
//! JSON manifest of shapes, all under one directory.
//!
//! Tensor files use the matrix convention from [`crate::tensor_io`]; the
//! manifest records the module kind, its dimension block, every tensor's
//! name/shape/file, and scalar parameters. Loading validates shapes against
//! the manifest and rejects missing or extra tensors, so a directory either
//! reconstructs the exact weights or fails loudly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vad_core::decoder::{DecoderDims, DecoderWeights};
use vad_core::projector::{ProjectorDims, ProjectorWeights};
use vad_core::twoway::{AttentionWeights, MlpWeights, TwoWayBlock};
use vad_core::Matrix;

use crate::error::{PipelineError, Result};
use crate::tensor_io::{read_matrix, write_matrix};

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsManifest {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projector_dims: Option<ProjectorDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decoder_dims: Option<DecoderDims>,
    #[serde(default)]
    scalars: BTreeMap<String, f64>,
    tensors: Vec<TensorEntry>,
}

fn attention_tensors<'a>(
    prefix: &str,
    attn: &'a AttentionWeights,
    out: &mut Vec<(String, &'a Matrix)>,
) {
    out.push((format!("{prefix}.wq"), &attn.wq));
    out.push((format!("{prefix}.wk"), &attn.wk));
    out.push((format!("{prefix}.wv"), &attn.wv));
    out.push((format!("{prefix}.wo"), &attn.wo));
}

fn block_tensors<'a>(index: usize, block: &'a TwoWayBlock, out: &mut Vec<(String, &'a Matrix)>) {
    attention_tensors(
        &format!("block{index}.token_to_context"),
        &block.token_to_context,
        out,
    );
    attention_tensors(&format!("block{index}.token_self"), &block.token_self, out);
    out.push((format!("block{index}.mlp.w1"), &block.mlp.w1));
    out.push((format!("block{index}.mlp.w2"), &block.mlp.w2));
    attention_tensors(
        &format!("block{index}.context_to_token"),
        &block.context_to_token,
        out,
    );
}

fn write_weight_dir(
    dir: &Path,
    mut manifest: WeightsManifest,
    tensors: &[(String, &Matrix)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, matrix) in tensors {
        let file = format!("{name}.bin");
        write_matrix(&dir.join(&file), matrix)?;
        manifest.tensors.push(TensorEntry {
            name: name.clone(),
            rows: matrix.rows(),
            cols: matrix.cols(),
            file,
        });
    }
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

struct TensorReader<'a> {
    dir: &'a Path,
    entries: BTreeMap<String, TensorEntry>,
}

impl<'a> TensorReader<'a> {
    fn new(dir: &'a Path, manifest_tensors: Vec<TensorEntry>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for e in manifest_tensors {
            if entries.insert(e.name.clone(), e).is_some() {
                return Err(PipelineError::data(format!(
                    "{}: duplicate tensor in weights manifest",
                    dir.display()
                )));
            }
        }
        Ok(TensorReader { dir, entries })
    }

    fn take(&mut self, name: &str) -> Result<Matrix> {
        let entry = self.entries.remove(name).ok_or_else(|| {
            PipelineError::data(format!(
                "{}: weights manifest lacks tensor {name:?}",
                self.dir.display()
            ))
        })?;
        let matrix = read_matrix(&self.dir.join(&entry.file))?;
        if matrix.rows() != entry.rows || matrix.cols() != entry.cols {
            return Err(PipelineError::data(format!(
                "{}: tensor {name:?} is {}x{}, manifest says {}x{}",
                self.dir.display(),
                matrix.rows(),
                matrix.cols(),
                entry.rows,
                entry.cols
            )));
        }
        Ok(matrix)
    }

    fn take_attention(&mut self, prefix: &str) -> Result<AttentionWeights> {
        Ok(AttentionWeights {
            wq: self.take(&format!("{prefix}.wq"))?,
            wk: self.take(&format!("{prefix}.wk"))?,
            wv: self.take(&format!("{prefix}.wv"))?,
            wo: self.take(&format!("{prefix}.wo"))?,
        })
    }

    fn take_block(&mut self, index: usize) -> Result<TwoWayBlock> {
        Ok(TwoWayBlock {
            token_to_context: self.take_attention(&format!("block{index}.token_to_context"))?,
            token_self: self.take_attention(&format!("block{index}.token_self"))?,
            mlp: MlpWeights {
                w1: self.take(&format!("block{index}.mlp.w1"))?,
                w2: self.take(&format!("block{index}.mlp.w2"))?,
            },
            context_to_token: self.take_attention(&format!("block{index}.context_to_token"))?,
        })
    }

    fn finish(self) -> Result<()> {
        if let Some(name) = self.entries.keys().next() {
            return Err(PipelineError::data(format!(
                "{}: weights manifest lists unused tensor {name:?}",
                self.dir.display()
            )));
        }
        Ok(())
    }
}

fn read_weights_manifest(dir: &Path, kind: &str) -> Result<WeightsManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))?;
    let manifest: WeightsManifest = serde_json::from_str(&text)
        .map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))?;
    if manifest.kind != kind {
        return Err(PipelineError::data(format!(
            "{}: weights are {:?}, expected {kind:?}",
            path.display(),
            manifest.kind
        )));
    }
    Ok(manifest)
}

/// Writes projector weights under `dir`.
pub fn save_projector_weights(dir: &Path, weights: &ProjectorWeights) -> Result<()> {
    let mut tensors: Vec<(String, &Matrix)> = vec![
        ("w_c".to_string(), &weights.w_c),
        ("w_v".to_string(), &weights.w_v),
        ("w_o".to_string(), &weights.w_o),
        ("w_llm".to_string(), &weights.w_llm),
        ("queries".to_string(), &weights.queries),
        ("output_map".to_string(), &weights.output_map),
    ];
    for (i, block) in weights.blocks.iter().enumerate() {
        block_tensors(i, block, &mut tensors);
    }
    write_weight_dir(
        dir,
        WeightsManifest {
            kind: "projector".to_string(),
            projector_dims: Some(weights.dims.clone()),
            decoder_dims: None,
            scalars: BTreeMap::new(),
            tensors: Vec::new(),
        },
        &tensors,
    )
}

/// Reads projector weights written by [`save_projector_weights`].
pub fn load_projector_weights(dir: &Path) -> Result<ProjectorWeights> {
    let manifest = read_weights_manifest(dir, "projector")?;
    let dims = manifest.projector_dims.clone().ok_or_else(|| {
        PipelineError::data(format!("{}: manifest lacks projector dims", dir.display()))
    })?;
    let mut reader = TensorReader::new(dir, manifest.tensors)?;
    let weights = ProjectorWeights {
        w_c: reader.take("w_c")?,
        w_v: reader.take("w_v")?,
        w_o: reader.take("w_o")?,
        w_llm: reader.take("w_llm")?,
        queries: reader.take("queries")?,
        blocks: (0..dims.depth)
            .map(|i| reader.take_block(i))
            .collect::<Result<Vec<_>>>()?,
        output_map: reader.take("output_map")?,
        dims,
    };
    reader.finish()?;
    if weights.w_c.rows() != weights.dims.text_dim
        || weights.w_v.rows() != weights.dims.vision_dim
        || weights.queries.rows() != weights.dims.query_count
        || weights.queries.cols() != weights.dims.prompt_dim
    {
        return Err(PipelineError::data(format!(
            "{}: tensor shapes disagree with the recorded dims",
            dir.display()
        )));
    }
    Ok(weights)
}

/// Writes decoder weights under `dir`.
pub fn save_decoder_weights(dir: &Path, weights: &DecoderWeights) -> Result<()> {
    let mut tensors: Vec<(String, &Matrix)> = vec![
        ("input_proj".to_string(), &weights.input_proj),
        ("mask_token".to_string(), &weights.mask_token),
        ("object_token".to_string(), &weights.object_token),
        ("pixel_map".to_string(), &weights.pixel_map),
        ("object_head".to_string(), &weights.object_head),
    ];
    for (i, block) in weights.blocks.iter().enumerate() {
        block_tensors(i, block, &mut tensors);
    }
    let mut scalars = BTreeMap::new();
    scalars.insert("object_bias".to_string(), weights.object_bias);
    write_weight_dir(
        dir,
        WeightsManifest {
            kind: "decoder".to_string(),
            projector_dims: None,
            decoder_dims: Some(weights.dims.clone()),
            scalars,
            tensors: Vec::new(),
        },
        &tensors,
    )
}

/// Reads decoder weights written by [`save_decoder_weights`].
pub fn load_decoder_weights(dir: &Path) -> Result<DecoderWeights> {
    let manifest = read_weights_manifest(dir, "decoder")?;
    let dims = manifest.decoder_dims.clone().ok_or_else(|| {
        PipelineError::data(format!("{}: manifest lacks decoder dims", dir.display()))
    })?;
    let object_bias = *manifest.scalars.get("object_bias").ok_or_else(|| {
        PipelineError::data(format!("{}: manifest lacks object_bias", dir.display()))
    })?;
    let mut reader = TensorReader::new(dir, manifest.tensors)?;
    let weights = DecoderWeights {
        input_proj: reader.take("input_proj")?,
        mask_token: reader.take("mask_token")?,
        object_token: reader.take("object_token")?,
        pixel_map: reader.take("pixel_map")?,
        object_head: reader.take("object_head")?,
        blocks: (0..dims.depth)
            .map(|i| reader.take_block(i))
            .collect::<Result<Vec<_>>>()?,
        object_bias,
        dims,
    };
    reader.finish()?;
    if weights.input_proj.rows() != weights.dims.vision_dim
        || weights.input_proj.cols() != weights.dims.prompt_dim
        || weights.mask_token.cols() != weights.dims.prompt_dim
        || weights.pixel_map.cols() != weights.dims.pixel_dim
    {
        return Err(PipelineError::data(format!(
            "{}: tensor shapes disagree with the recorded dims",
            dir.display()
        )));
    }
    Ok(weights)
}
