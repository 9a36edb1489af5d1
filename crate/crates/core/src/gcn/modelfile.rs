//! JSON model documents. Floats are written with 17 significant digits so a
//! saved model reloads bit-identically.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GcnModel, HeadKind, Readout};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "gcncluster-model-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_array(m: &Array2<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| Error::Shape(format!("matrix {}x{}: {e}", self.rows, self.cols)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutDoc {
    pub weight: Vec<f64>,
    pub bias: f64,
}

/// On-disk layout shared by GCN models and the linear softmax classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub head: String,
    pub layers: Vec<MatrixDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutDoc>,
    /// Per-output bias, used by the linear classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metadata: Vec<(String, String)>,
}

impl ModelDocument {
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("model documents serialize");
        let mut out = String::new();
        write_value(&value, 0, &mut out);
        out.push('\n');
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("unknown model format {:?}", doc.format),
            });
        }
        Ok(doc)
    }
}

fn write_number(v: f64, out: &mut String) {
    out.push_str(&format!("{v:.16e}"));
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(num) => match (num.as_u64(), num.as_i64()) {
            (Some(u), _) => out.push_str(&u.to_string()),
            (None, Some(i)) => out.push_str(&i.to_string()),
            _ => write_number(num.as_f64().expect("finite"), out),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.iter().all(|i| i.is_number()) {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(item, indent, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    out.push_str(&pad(indent + 1));
                    write_value(item, indent + 1, out);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&pad(indent));
                out.push(']');
            }
        }
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

impl GcnModel {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT.into(),
            head: self.head.name().into(),
            layers: self.layers.iter().map(MatrixDoc::from_array).collect(),
            readout: self.readout.as_ref().map(|r| ReadoutDoc {
                weight: r.weight.to_vec(),
                bias: r.bias,
            }),
            bias: None,
            metadata: Vec::new(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let head = match doc.head.as_str() {
            "softmax" => HeadKind::Softmax,
            "mean_pool" => HeadKind::MeanPool,
            "vertex_sigmoid" => HeadKind::VertexSigmoid,
            other => return Err(Error::config(format!("unknown GCN head {other:?}"))),
        };
        let layers = doc
            .layers
            .iter()
            .map(MatrixDoc::to_array)
            .collect::<Result<Vec<_>>>()?;
        let readout = doc.readout.as_ref().map(|r| Readout {
            weight: Array1::from(r.weight.clone()),
            bias: r.bias,
        });
        GcnModel::new(layers, head, readout)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_document().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_document(&ModelDocument::load(path)?)
    }
}
