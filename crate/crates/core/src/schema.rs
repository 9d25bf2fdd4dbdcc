//! JSON Schemas for everything written to disk or sent over the wire.

use std::sync::OnceLock;

use jsonschema::Validator;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaKind {
    Frame,
    Edit,
    ScenarioMeta,
    Episode,
    PolicyRequest,
    PolicyResponse,
}

impl SchemaKind {
    pub const ALL: [SchemaKind; 6] = [
        SchemaKind::Frame,
        SchemaKind::Edit,
        SchemaKind::ScenarioMeta,
        SchemaKind::Episode,
        SchemaKind::PolicyRequest,
        SchemaKind::PolicyResponse,
    ];

    pub fn source(&self) -> &'static str {
        match self {
            SchemaKind::Frame => include_str!("../schemas/frame.schema.json"),
            SchemaKind::Edit => include_str!("../schemas/edit.schema.json"),
            SchemaKind::ScenarioMeta => include_str!("../schemas/scenario_meta.schema.json"),
            SchemaKind::Episode => include_str!("../schemas/episode.schema.json"),
            SchemaKind::PolicyRequest => include_str!("../schemas/policy_request.schema.json"),
            SchemaKind::PolicyResponse => include_str!("../schemas/policy_response.schema.json"),
        }
    }

    fn slot(&self) -> usize {
        Self::ALL.iter().position(|k| k == self).unwrap()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{kind:?} schema violation at {pointer:?}: {message}")]
pub struct SchemaError {
    pub kind: SchemaKind,
    /// JSON pointer of the offending value, "" for the root.
    pub pointer: String,
    pub message: String,
}

fn validator(kind: SchemaKind) -> &'static Validator {
    static CACHE: OnceLock<Vec<Validator>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        SchemaKind::ALL
            .iter()
            .map(|k| {
                let v: Value = serde_json::from_str(k.source()).expect("bundled schema is JSON");
                jsonschema::validator_for(&v).expect("bundled schema compiles")
            })
            .collect()
    });
    &all[kind.slot()]
}

/// First violation, if any.
pub fn validate(kind: SchemaKind, instance: &Value) -> Result<(), SchemaError> {
    match validator(kind).iter_errors(instance).next() {
        None => Ok(()),
        Some(e) => Err(SchemaError {
            kind,
            pointer: e.instance_path().as_str().to_string(),
            message: e.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn all_schemas_compile() {
        for k in SchemaKind::ALL {
            validator(k);
        }
    }

    #[test]
    fn violation_names_the_path() {
        let bad = json!({"scenario": "s", "frame_index": 1, "qa_pairs": [{"qid": "x"}]});
        let e = validate(SchemaKind::Frame, &bad).unwrap_err();
        assert!(e.pointer.starts_with("/qa_pairs/0"), "{e}");
    }

    #[test]
    fn unknown_fields_are_tolerated() {
        let ok = json!({"scenario": "s", "frame_index": 1, "qa_pairs": [], "future_field": 3});
        validate(SchemaKind::Frame, &ok).unwrap();
    }

    #[test]
    fn image_payload_modes_are_exclusive() {
        let base = |img: Value| {
            json!({"episode_id": "e", "frame_index": 0, "qid": 50, "question": "q", "prompt": "p",
                   "answer_kind": "key-value", "images": [img]})
        };
        validate(SchemaKind::PolicyRequest, &base(json!({"type": "path", "path": "/x.png"}))).unwrap();
        assert!(validate(SchemaKind::PolicyRequest, &base(json!({"type": "path", "path": "/x", "data": "AA=="}))).is_err());
        assert!(validate(SchemaKind::PolicyRequest, &base(json!({"type": "inline", "media_type": "image/png"}))).is_err());
    }
}
