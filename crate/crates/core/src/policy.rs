//! The policy interface and the built-in reference policies.

use std::collections::BTreeMap;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expert::{AnswerKind, GtPayload, QaPair};
use crate::keys::{ActionKeys, DirectionKey, SpeedKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ImagePayload {
    /// A file the policy process can read.
    Path { path: String },
    Inline { media_type: String, data: String },
}

impl ImagePayload {
    pub fn inline_png(bytes: &[u8]) -> Self {
        ImagePayload::Inline { media_type: "image/png".into(), data: encode_base64(bytes) }
    }

    /// Raw bytes of the image, reading `Path` payloads from disk.
    pub fn bytes(&self) -> Result<Vec<u8>, PolicyError> {
        match self {
            ImagePayload::Path { path } => {
                std::fs::read(path).map_err(|e| PolicyError::Protocol(format!("image {path}: {e}")))
            }
            ImagePayload::Inline { data, .. } => decode_base64(data),
        }
    }
}

pub fn encode_base64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_base64(text: &str) -> Result<Vec<u8>, PolicyError> {
    base64::engine::general_purpose::STANDARD
        .decode(text.trim())
        .map_err(|e| PolicyError::Protocol(format!("bad base64 image: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub episode_id: String,
    pub frame_index: u64,
    pub qid: u32,
    pub question: String,
    /// Full prompt, with context and input references already embedded.
    pub prompt: String,
    pub answer_kind: AnswerKind,
    #[serde(default)]
    pub images: Vec<ImagePayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_input: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyResponse {
    pub answer: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub model_id: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolicyError {
    /// Worth retrying: connection refused, timeouts.
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("policy {policy} needs the expert answer for question {qid}")]
    MissingOracle { policy: String, qid: u32 },
    #[error("unknown policy {0:?}; built-in policies: {known}", known = BUILTIN_POLICIES.join(", "))]
    Unknown(String),
}

pub trait Policy {
    fn name(&self) -> &str;

    /// `oracle` is the expert answer for the same question; only the
    /// reference policies read it.
    fn answer(&mut self, request: &PolicyRequest, oracle: Option<&QaPair>) -> Result<String, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn answer(&mut self, request: &PolicyRequest, oracle: Option<&QaPair>) -> Result<String, PolicyError> {
        (**self).answer(request, oracle)
    }
}

fn oracle_text<'a>(name: &str, req: &PolicyRequest, oracle: Option<&'a QaPair>) -> Result<&'a QaPair, PolicyError> {
    oracle.ok_or_else(|| PolicyError::MissingOracle { policy: name.into(), qid: req.qid })
}

/// Answers every question with the expert answer.
#[derive(Debug, Default, Clone)]
pub struct GtEcho;

impl Policy for GtEcho {
    fn name(&self) -> &str {
        "gt-echo"
    }
    fn answer(&mut self, req: &PolicyRequest, oracle: Option<&QaPair>) -> Result<String, PolicyError> {
        Ok(oracle_text(self.name(), req, oracle)?.gt_answer_text.clone())
    }
}

#[derive(Debug, Clone)]
pub struct Constant {
    pub text: String,
}

impl Default for Constant {
    fn default() -> Self {
        Self { text: "FOLLOW_LANE, KEEP".into() }
    }
}

impl Policy for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn answer(&mut self, _: &PolicyRequest, _: Option<&QaPair>) -> Result<String, PolicyError> {
        Ok(self.text.clone())
    }
}

/// Answers with the last non-empty line of the prompt.
#[derive(Debug, Default, Clone)]
pub struct Echo;

impl Policy for Echo {
    fn name(&self) -> &str {
        "echo"
    }
    fn answer(&mut self, req: &PolicyRequest, _: Option<&QaPair>) -> Result<String, PolicyError> {
        Ok(req.prompt.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").to_string())
    }
}

/// Canned answers keyed by frame index, then qid. The frame key `*`
/// applies to frames without their own entry; anything missing answers "".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scripted {
    pub frames: BTreeMap<String, BTreeMap<u32, String>>,
}

impl Scripted {
    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let frames = serde_json::from_str(text).map_err(|e| PolicyError::Protocol(format!("scripted fixture: {e}")))?;
        Ok(Self { frames })
    }
}

impl Policy for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }
    fn answer(&mut self, req: &PolicyRequest, _: Option<&QaPair>) -> Result<String, PolicyError> {
        let frame = self.frames.get(&req.frame_index.to_string()).or_else(|| self.frames.get("*"));
        Ok(frame.and_then(|f| f.get(&req.qid)).cloned().unwrap_or_default())
    }
}

/// Expert answers whose action keys are replaced by wrong ones on a share
/// `rate` of frames.
///
/// The draw depends only on seed and frame, so the corrupted frames at a
/// lower rate are a subset of those at a higher rate.
#[derive(Debug, Clone)]
pub struct NoisyGt {
    pub rate: f64,
    pub seed: u64,
}

impl NoisyGt {
    fn frame_rng(&self, frame: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn corrupts(&self, frame: u64) -> bool {
        self.frame_rng(frame).gen::<f64>() < self.rate
    }

    fn wrong_keys(&self, frame: u64, gt: ActionKeys) -> ActionKeys {
        let mut rng = self.frame_rng(frame);
        let _ = rng.gen::<f64>();
        let dirs: Vec<DirectionKey> = DirectionKey::ALL.iter().copied().filter(|d| Some(*d) != gt.direction).collect();
        let speeds: Vec<SpeedKey> = SpeedKey::ALL.iter().copied().filter(|s| Some(*s) != gt.speed).collect();
        ActionKeys::new(dirs[rng.gen_range(0..dirs.len())], speeds[rng.gen_range(0..speeds.len())])
    }
}

impl Policy for NoisyGt {
    fn name(&self) -> &str {
        "noisy-gt"
    }
    fn answer(&mut self, req: &PolicyRequest, oracle: Option<&QaPair>) -> Result<String, PolicyError> {
        let qa = oracle_text(self.name(), req, oracle)?;
        let GtPayload::Keys { keys } = &qa.gt_payload else {
            return Ok(qa.gt_answer_text.clone());
        };
        if !self.corrupts(req.frame_index) {
            return Ok(qa.gt_answer_text.clone());
        }
        let wrong = self.wrong_keys(req.frame_index, *keys).render();
        Ok(match qa.gt_answer_text.rfind("Action:") {
            Some(i) => format!("{}Action: {wrong}.", &qa.gt_answer_text[..i]),
            None => wrong,
        })
    }
}

pub const BUILTIN_POLICIES: [&str; 5] = ["gt-echo", "constant[:<text>]", "noisy-gt:<rate>", "scripted:<json file>", "echo"];

/// Builds a built-in policy from one of [`BUILTIN_POLICIES`].
pub fn builtin_policy(spec: &str, seed: u64) -> Result<Box<dyn Policy + Send>, PolicyError> {
    let (name, arg) = spec.split_once(':').map_or((spec, None), |(a, b)| (a, Some(b)));
    match (name, arg) {
        ("gt-echo", None) => Ok(Box::new(GtEcho)),
        ("echo", None) => Ok(Box::new(Echo)),
        ("constant", None) => Ok(Box::new(Constant::default())),
        ("constant", Some(t)) => Ok(Box::new(Constant { text: t.to_string() })),
        ("noisy-gt", Some(r)) => {
            let rate: f64 = r.parse().map_err(|_| PolicyError::Unknown(spec.into()))?;
            if !(0.0..=1.0).contains(&rate) {
                return Err(PolicyError::Unknown(spec.into()));
            }
            Ok(Box::new(NoisyGt { rate, seed }))
        }
        ("scripted", Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Protocol(format!("{path}: {e}")))?;
            Ok(Box::new(Scripted::from_json(&text)?))
        }
        _ => Err(PolicyError::Unknown(spec.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::extract_keys;

    fn req(qid: u32, frame: u64) -> PolicyRequest {
        PolicyRequest {
            episode_id: "s".into(),
            frame_index: frame,
            qid,
            question: "q".into(),
            prompt: "p".into(),
            answer_kind: AnswerKind::KeyValue,
            images: vec![],
            text_input: None,
        }
    }

    fn keys_qa(qid: u32, text: &str) -> QaPair {
        QaPair {
            qid,
            question_text: "q".into(),
            gt_answer_text: text.into(),
            gt_payload: GtPayload::Keys { keys: extract_keys(text) },
            frame_index: 0,
        }
    }

    #[test]
    fn gt_echo_requires_oracle() {
        assert!(matches!(GtEcho.answer(&req(50, 0), None), Err(PolicyError::MissingOracle { .. })));
        let qa = keys_qa(50, "FOLLOW_LANE, KEEP");
        assert_eq!(GtEcho.answer(&req(50, 0), Some(&qa)).unwrap(), "FOLLOW_LANE, KEEP");
    }

    #[test]
    fn noisy_rates_nest_and_keys_change() {
        let qa = keys_qa(43, "Keep going. Action: FOLLOW_LANE, KEEP.");
        let gt = extract_keys(&qa.gt_answer_text);
        for frame in 0..200 {
            let lo = NoisyGt { rate: 0.25, seed: 9 };
            let hi = NoisyGt { rate: 0.5, seed: 9 };
            if lo.corrupts(frame) {
                assert!(hi.corrupts(frame));
            }
            let mut all = NoisyGt { rate: 1.0, seed: 9 };
            let k = extract_keys(&all.answer(&req(43, frame), Some(&qa)).unwrap());
            assert_ne!(k.direction, gt.direction);
            assert_ne!(k.speed, gt.speed);
            let mut none = NoisyGt { rate: 0.0, seed: 9 };
            assert_eq!(none.answer(&req(43, frame), Some(&qa)).unwrap(), qa.gt_answer_text);
        }
    }

    #[test]
    fn scripted_by_frame() {
        let mut p = Scripted::from_json(r#"{"5": {"50": "TURN_LEFT, STOP"}, "*": {"50": "FOLLOW_LANE, KEEP"}}"#).unwrap();
        assert_eq!(p.answer(&req(50, 5), None).unwrap(), "TURN_LEFT, STOP");
        assert_eq!(p.answer(&req(50, 10), None).unwrap(), "FOLLOW_LANE, KEEP");
        assert_eq!(p.answer(&req(43, 10), None).unwrap(), "");
    }

    #[test]
    fn echo_returns_prompt_tail() {
        let mut r = req(7, 0);
        r.prompt = "context
Question: speed?
".into();
        assert_eq!(Echo.answer(&r, None).unwrap(), "Question: speed?");
    }

    #[test]
    fn builtin_specs() {
        assert_eq!(builtin_policy("gt-echo", 0).unwrap().name(), "gt-echo");
        assert_eq!(builtin_policy("noisy-gt:0.5", 0).unwrap().name(), "noisy-gt");
        assert!(builtin_policy("noisy-gt:2", 0).is_err());
        let err = builtin_policy("bogus", 0).err().unwrap().to_string();
        assert!(err.contains("gt-echo") && err.contains("scripted"), "{err}");
        assert_eq!(builtin_policy("constant", 0).unwrap().answer(&req(50, 0), None).unwrap(), "FOLLOW_LANE, KEEP");
        let mut c = builtin_policy("constant:FOLLOW_LANE, STOP", 0).unwrap();
        assert_eq!(c.answer(&req(1, 0), None).unwrap(), "FOLLOW_LANE, STOP");
    }

    #[test]
    fn image_payload_json_shape() {
        let p = ImagePayload::inline_png(&[1, 2, 3]);
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["type"], "inline");
        assert_eq!(p.bytes().unwrap(), vec![1, 2, 3]);
    }
}
