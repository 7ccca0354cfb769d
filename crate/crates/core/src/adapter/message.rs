use std::path::PathBuf;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotation::{LabelMask, PolygonSet};
use crate::error::{Error, Result};
use crate::model::{PredictionBundle, SampleId};

pub const PROTOCOL_VERSION: u32 = 1;

/// Error codes carried in `error` payloads.
pub mod codes {
    pub const VERSION: &str = "version";
    pub const PROTOCOL: &str = "protocol";
    pub const BAD_MODE: &str = "bad_mode";
    pub const UNSUPPORTED_FIELD: &str = "unsupported_field";
    pub const IO: &str = "io";
    pub const INTERNAL: &str = "internal";
}

/// Cap on one message line.
pub const MAX_LINE: usize = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Hello,
    Train,
    TrainSsl,
    Predict,
    Shutdown,
    Ack,
    Bundle,
    Error,
}

impl Kind {
    pub fn is_request(self) -> bool {
        matches!(
            self,
            Kind::Hello | Kind::Train | Kind::TrainSsl | Kind::Predict | Kind::Shutdown
        )
    }
}

/// One line of the wire protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub kind: Kind,
    pub id: u64,
    #[serde(default)]
    pub payload: Value,
}

impl Message {
    pub fn new<T: Serialize>(kind: Kind, id: u64, payload: &T) -> Result<Self> {
        Ok(Message {
            kind,
            id,
            payload: serde_json::to_value(payload)?,
        })
    }

    pub fn error(id: u64, code: &str, message: impl Into<String>) -> Self {
        Message {
            kind: Kind::Error,
            id,
            payload: serde_json::json!({ "code": code, "message": message.into() }),
        }
    }

    pub fn parse(line: &str) -> Result<Self> {
        if line.len() > MAX_LINE {
            return Err(Error::adapter(codes::PROTOCOL, "message line too long"));
        }
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| Error::adapter(codes::PROTOCOL, format!("malformed message: {e}")))
    }

    /// Single-line JSON without a trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn payload_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.payload.clone()).map_err(|e| {
            Error::adapter(
                codes::PROTOCOL,
                format!("bad {:?} payload: {e}", self.kind).to_lowercase(),
            )
        })
    }

    /// The remote error carried by an `error` message.
    pub fn as_error(&self) -> Option<Error> {
        (self.kind == Kind::Error).then(|| {
            let p: ErrorPayload = serde_json::from_value(self.payload.clone()).unwrap_or(ErrorPayload {
                code: "unknown".into(),
                message: self.payload.to_string(),
            });
            Error::adapter(p.code, p.message)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub version: u32,
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_dataset: Option<PathBuf>,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub void_id: Option<u8>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelloAck {
    pub version: u32,
    pub fields: Vec<String>,
    #[serde(default)]
    pub learner: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexedPolygons {
    pub index: SampleId,
    pub polygons: PolygonSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPayload {
    pub labeled: Vec<SampleId>,
    /// `supervised` or `ssl`; `train_ssl` implies `ssl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unlabeled: Vec<SampleId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polygons: Vec<IndexedPolygons>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default)]
    pub loss_head: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub options: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainAck {
    pub wall_time_s: f64,
    #[serde(default)]
    pub train_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictPayload {
    /// `pool` for the dataset file, `test` for the separate test file.
    pub split: String,
    pub indices: Vec<SampleId>,
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub masks: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BundlePayload {
    #[serde(flatten)]
    pub bundle: PredictionBundle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<LabelMask>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

/// Payload keys that carry wall-clock measurements.
pub const TIMING_FIELDS: [&str; 1] = ["wall_time_s"];

/// Replaces every `{"shape": [...], "data_b64": "..."}` object with the
/// nested array it encodes (f32 little-endian, row-major).
pub fn expand_b64(value: &mut Value) -> Result<()> {
    match value {
        Value::Object(map) => {
            if map.len() == 2 && map.contains_key("shape") && map.contains_key("data_b64") {
                let shape: Vec<usize> = serde_json::from_value(map["shape"].clone())
                    .map_err(|e| Error::adapter(codes::PROTOCOL, format!("bad shape: {e}")))?;
                if shape.len() > 4 {
                    return Err(Error::adapter(codes::PROTOCOL, "data_b64 arrays have at most 4 axes"));
                }
                let text = map["data_b64"]
                    .as_str()
                    .ok_or_else(|| Error::adapter(codes::PROTOCOL, "data_b64 is not a string"))?;
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(text)
                    .map_err(|e| Error::adapter(codes::PROTOCOL, format!("bad base64: {e}")))?;
                let count = shape
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d))
                    .filter(|&c| c.checked_mul(4) == Some(bytes.len()))
                    .ok_or_else(|| {
                        Error::adapter(codes::PROTOCOL, "data_b64 length disagrees with shape")
                    })?;
                let floats: Vec<f64> = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                debug_assert_eq!(floats.len(), count);
                *value = nest(&floats, &shape);
                return Ok(());
            }
            map.values_mut().try_for_each(expand_b64)
        }
        Value::Array(items) => items.iter_mut().try_for_each(expand_b64),
        _ => Ok(()),
    }
}

fn nest(data: &[f64], shape: &[usize]) -> Value {
    match shape {
        [] => data.first().map_or(Value::Null, |&x| Value::from(x)),
        [_] => Value::Array(data.iter().map(|&x| Value::from(x)).collect()),
        [n, rest @ ..] => {
            let stride: usize = rest.iter().product();
            Value::Array(
                (0..*n)
                    .map(|i| nest(&data[i * stride..(i + 1) * stride], rest))
                    .collect(),
            )
        }
    }
}

/// Encodes a matrix as a `data_b64` object.
pub fn encode_b64(rows: &[Vec<f64>]) -> Value {
    let cols = rows.first().map_or(0, Vec::len);
    let bytes: Vec<u8> = rows
        .iter()
        .flatten()
        .flat_map(|&x| (x as f32).to_le_bytes())
        .collect();
    serde_json::json!({
        "shape": [rows.len(), cols],
        "data_b64": base64::engine::general_purpose::STANDARD.encode(bytes),
    })
}

/// Decodes a `bundle` payload, expanding any base64 arrays.
pub fn decode_bundle(payload: &Value) -> Result<BundlePayload> {
    let mut v = payload.clone();
    expand_b64(&mut v)?;
    serde_json::from_value(v)
        .map_err(|e| Error::adapter(codes::PROTOCOL, format!("bad bundle payload: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let m = Message::error(4, codes::BAD_MODE, "mode `x`");
        let line = m.to_line();
        assert!(!line.contains('\n'));
        assert_eq!(Message::parse(&line).unwrap(), m);
        assert_eq!(
            line,
            r#"{"kind":"error","id":4,"payload":{"code":"bad_mode","message":"mode `x`"}}"#
        );
    }

    #[test]
    fn unknown_kind_and_extra_keys_are_rejected() {
        assert!(Message::parse(r#"{"kind":"jump","id":1,"payload":{}}"#).is_err());
        assert!(Message::parse(r#"{"kind":"ack","id":1,"payload":{},"x":0}"#).is_err());
        assert!(Message::parse(r#"{"kind":"ack","id":-1}"#).is_err());
    }

    #[test]
    fn b64_matrix_expands() {
        let rows = vec![vec![0.25, 0.75], vec![1.0, 0.0], vec![0.5, 0.5]];
        let mut v = serde_json::json!({ "indices": [0, 1, 2], "probs": encode_b64(&rows) });
        expand_b64(&mut v).unwrap();
        let b = decode_bundle(&v).unwrap();
        assert_eq!(b.bundle.probs.unwrap(), rows);
    }

    #[test]
    fn b64_length_mismatch_fails() {
        let mut v = serde_json::json!({ "shape": [2, 2], "data_b64": "AAAAAA==" });
        assert!(expand_b64(&mut v).is_err());
        let mut v = serde_json::json!({ "shape": [usize::MAX, 4], "data_b64": "" });
        assert!(expand_b64(&mut v).is_err());
    }
}
