//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"TNCK" | u32 format version | u64 header length | header JSON | f64 parameters
//! ```
//!
//! The header records the model kind, featurizer config, dimensions and
//! pt_order. Classifier parameters are the weight matrix (row per feature)
//! followed by the bias; dual-encoder parameters are the projection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ClassifierModel, DualEncoder, Model, ModelKind};
use crate::ontology::Ontology;
use crate::text::FeaturizerConfig;

pub const MAGIC: &[u8; 4] = b"TNCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    featurizer: FeaturizerConfig,
    pt_order: Vec<String>,
    #[serde(default)]
    embed_dim: Option<usize>,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    index_llts: bool,
    n_params: usize,
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let (header, params): (Header, Vec<&[f64]>) = match model {
        Model::Classifier(m) => (
            Header {
                kind: ModelKind::Classifier,
                featurizer: m.featurizer(),
                pt_order: m.pt_order().to_vec(),
                embed_dim: None,
                temperature: None,
                index_llts: false,
                n_params: m.weights().len() + m.bias().len(),
            },
            vec![m.weights(), m.bias()],
        ),
        Model::DualEncoder(m) => (
            Header {
                kind: ModelKind::DualEncoder,
                featurizer: m.featurizer(),
                pt_order: m.pt_order().to_vec(),
                embed_dim: Some(m.embed_dim()),
                temperature: Some(m.temperature()),
                index_llts: m.index_llts,
                n_params: m.projection().len(),
            },
            vec![m.projection()],
        ),
    };
    let n_params = header.n_params;
    let header = serde_json::to_vec(&header).expect("serializable");
    let mut out = Vec::with_capacity(16 + header.len() + 8 * n_params);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for block in params {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint("truncated checkpoint".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

/// Decodes a checkpoint without checking it against an ontology.
pub fn from_bytes(mut bytes: &[u8]) -> Result<Model> {
    let cur = &mut bytes;
    if take(cur, 4)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(cur, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(take(cur, 8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(cur, hlen)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if cur.len() != header.n_params * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, found {} bytes",
            header.n_params,
            cur.len()
        )));
    }
    let params: Vec<f64> = cur
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    match header.kind {
        ModelKind::Classifier => {
            let c = header.pt_order.len();
            if params.len() < c {
                return Err(Error::Checkpoint("parameter count too small".into()));
            }
            let (w, b) = params.split_at(params.len() - c);
            Ok(Model::Classifier(ClassifierModel::from_parameters(
                header.featurizer,
                header.pt_order,
                w.to_vec(),
                b.to_vec(),
            )?))
        }
        ModelKind::DualEncoder => {
            let d = header
                .embed_dim
                .ok_or_else(|| Error::Checkpoint("missing embed_dim".into()))?;
            let t = header
                .temperature
                .ok_or_else(|| Error::Checkpoint("missing temperature".into()))?;
            let mut enc = DualEncoder::from_parameters(header.featurizer, d, t, header.pt_order, params)?;
            enc.index_llts = header.index_llts;
            Ok(Model::DualEncoder(enc))
        }
    }
}

/// Decodes and checks that the model's pt_order is the ontology's.
pub fn from_bytes_for(bytes: &[u8], ontology: &Ontology) -> Result<Model> {
    let model = from_bytes(bytes)?;
    if model.pt_order() != ontology.pt_ids().as_slice() {
        return Err(Error::Checkpoint(
            "checkpoint pt_order does not match the ontology's PT inventory".into(),
        ));
    }
    Ok(model)
}

pub fn load(path: impl AsRef<Path>, ontology: &Ontology) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes_for(&bytes, ontology)
}
