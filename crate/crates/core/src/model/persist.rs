//! Model files: a little-endian `u32` header length, a JSON header describing
//! every slice classifier, then all parameters as little-endian `f64`.
//!
//! Parameter order per slice: linear `w` then `b`; MLP layer by layer, each
//! layer's row-major `W` then `b`; prior classifiers carry none.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseLayer, LinearModel, MlpModel, ModelError, SliceClassifier, SliceModel};

const FORMAT: &str = "activeslice-model";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
    slices: Vec<SliceHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SliceHeader {
    Linear { name: String, alpha: f64 },
    Mlp { name: String, layers: Vec<usize> },
    Prior { name: String, p: f64 },
}

pub fn model_to_bytes(model: &SliceModel) -> Vec<u8> {
    let mut params: Vec<f64> = Vec::new();
    let slices = model
        .classifiers
        .iter()
        .zip(&model.slice_names)
        .map(|(c, name)| {
            let name = name.clone();
            match c {
                SliceClassifier::Linear(m) => {
                    params.extend_from_slice(&m.w);
                    params.push(m.b);
                    SliceHeader::Linear { name, alpha: m.alpha }
                }
                SliceClassifier::Mlp(m) => {
                    params.extend(m.params().copied());
                    SliceHeader::Mlp {
                        name,
                        layers: m.layer_sizes(),
                    }
                }
                SliceClassifier::Prior { p } => SliceHeader::Prior { name, p: *p },
            }
        })
        .collect();
    let header = Header {
        format: FORMAT.into(),
        version: 1,
        dim: model.dim,
        slices,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len() + params.len() * 8);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<SliceModel, ModelError> {
    let fmt = |m: String| ModelError::Format(m);
    if bytes.len() < 4 {
        return Err(fmt("file too short for a header length".into()));
    }
    let hlen = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let body = &bytes[4..];
    if body.len() < hlen {
        return Err(fmt("header truncated".into()));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| fmt(format!("header: {e}")))?;
    if header.format != FORMAT || header.version != 1 {
        return Err(fmt(format!(
            "unsupported model format {:?} v{}",
            header.format, header.version
        )));
    }
    let payload = &body[hlen..];
    if payload.len() % 8 != 0 {
        return Err(fmt("parameter payload is not a whole number of f64".into()));
    }
    let mut params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |count: usize| -> Result<Vec<f64>, ModelError> {
        let v: Vec<f64> = params.by_ref().take(count).collect();
        if v.len() != count {
            return Err(ModelError::Format("parameter payload truncated".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::Format("non-finite parameter".into()));
        }
        Ok(v)
    };

    let mut names = Vec::new();
    let mut classifiers = Vec::new();
    for slice in header.slices {
        match slice {
            SliceHeader::Linear { name, alpha } => {
                let mut w = take(header.dim + 1)?;
                let b = w.pop().unwrap();
                names.push(name);
                classifiers.push(SliceClassifier::Linear(LinearModel { w, b, alpha }));
            }
            SliceHeader::Mlp { name, layers } => {
                if layers.first() != Some(&header.dim) {
                    return Err(ModelError::Format(format!(
                        "slice {name:?}: input layer does not match dim {}",
                        header.dim
                    )));
                }
                let mut model = MlpModel::zeros(&layers)
                    .map_err(|e| ModelError::Format(format!("slice {name:?}: {e}")))?;
                for DenseLayer { w, b, .. } in model.layers.iter_mut() {
                    *w = take(w.len())?;
                    *b = take(b.len())?;
                }
                names.push(name);
                classifiers.push(SliceClassifier::Mlp(model));
            }
            SliceHeader::Prior { name, p } => {
                names.push(name);
                classifiers.push(SliceClassifier::Prior { p });
            }
        }
    }
    if params.next().is_some() {
        return Err(ModelError::Format("trailing parameters".into()));
    }
    Ok(SliceModel {
        dim: header.dim,
        slice_names: names,
        classifiers,
    })
}

pub fn save_model(model: &SliceModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SliceModel, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_bytes(&bytes)
}
