//! Grading of policy answers against expert answers.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expert::{GtPayload, ObjectCondition, QaPair};
use crate::keys::{extract_keys, ActionKeys, SpeedKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    /// Importance constant R.
    pub importance_constant: f64,
    pub extra_ratio: f64,
    pub base_weight_special: f64,
    pub base_weight_plain: f64,
    /// Weight of an unlisted object for questions where extras are harmless.
    pub extra_harmless: f64,
    /// Weight of an unlisted object for collision questions.
    pub extra_collision: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            importance_constant: 5.0,
            extra_ratio: 2.0,
            base_weight_special: 3.0,
            base_weight_plain: 1.0,
            extra_harmless: 0.25,
            extra_collision: 1.5,
        }
    }
}

/// `p_i = n R / (R - 1) - i` for `i = 1..=n`.
pub fn position_weights(n: usize, w: &ScoreWeights) -> Vec<f64> {
    let r = w.importance_constant;
    let top = n as f64 * r / (r - 1.0);
    (1..=n).map(|i| top - i as f64).collect()
}

/// Final weights `b_i p_i` and the weight of one extra predicted object.
pub fn importance_weights(special: &[bool], w: &ScoreWeights) -> (Vec<f64>, f64) {
    let p = position_weights(special.len(), w);
    let weights = p
        .iter()
        .zip(special)
        .map(|(p, s)| p * if *s { w.base_weight_special } else { w.base_weight_plain })
        .collect();
    let extra = p.last().map_or(0.0, |m| m / w.extra_ratio);
    (weights, extra)
}

/// NDCG of `predicted` restricted to the objects that also appear in `gt`.
pub fn ndcg<S: AsRef<str>, T: AsRef<str>>(predicted: &[S], gt: &[T], gt_weights: &[f64]) -> f64 {
    let index: BTreeMap<&str, usize> = gt.iter().enumerate().map(|(i, g)| (g.as_ref(), i)).collect();
    let mut seen = BTreeSet::new();
    let overlap: Vec<f64> = predicted
        .iter()
        .filter_map(|p| index.get(p.as_ref()).copied())
        .filter(|i| seen.insert(*i))
        .map(|i| gt_weights[i])
        .collect();
    if overlap.is_empty() {
        return 0.0;
    }
    let dcg = |ws: &[f64]| -> f64 { ws.iter().enumerate().map(|(i, w)| w / ((i + 2) as f64).log2()).sum() };
    let mut ideal = overlap.clone();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal);
    if idcg <= 0.0 {
        return 0.0;
    }
    dcg(&overlap) / idcg
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct F1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn weighted_f1<S: AsRef<str>, T: AsRef<str>>(predicted: &[S], gt: &[T], gt_weights: &[f64], extra: f64) -> F1 {
    let pred: BTreeSet<&str> = predicted.iter().map(|p| p.as_ref()).collect();
    let gset: BTreeSet<&str> = gt.iter().map(|g| g.as_ref()).collect();
    let mut tp = 0.0;
    let mut fn_ = 0.0;
    for (g, w) in gt.iter().zip(gt_weights) {
        if pred.contains(g.as_ref()) {
            tp += w;
        } else {
            fn_ += w;
        }
    }
    let fp = pred.iter().filter(|p| !gset.contains(*p)).count() as f64 * extra;
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    F1 { precision, recall, f1: ratio(2.0 * precision * recall, precision + recall) }
}

/// Multiplier applied to the key F1 when the predicted speed key differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedPenaltyTable {
    /// `penalty[pred][gt]`, indexed by severity rank STOP, DECELERATE, KEEP, ACCELERATE.
    pub penalty: [[f64; 4]; 4],
}

impl Default for SpeedPenaltyTable {
    fn default() -> Self {
        let mut penalty = [[1.0; 4]; 4];
        for (p, row) in penalty.iter_mut().enumerate() {
            for (g, cell) in row.iter_mut().enumerate() {
                let d = p.abs_diff(g) as f64;
                *cell = if p == g {
                    1.0
                } else if p < g {
                    1.0 - 0.33 * d
                } else if g == 0 {
                    1.0 - d / 3.0
                } else if g == 2 && p == 3 {
                    1.0
                } else {
                    1.0 - 0.25 * d
                };
            }
        }
        Self { penalty }
    }
}

impl SpeedPenaltyTable {
    pub fn get(&self, pred: SpeedKey, gt: SpeedKey) -> f64 {
        self.penalty[pred.severity_rank() as usize][gt.severity_rank() as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub qid: u32,
    pub frame_index: u64,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub object_agg: Option<f64>,
    pub speed_penalty: Option<f64>,
    /// In [0, 1].
    pub final_score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ScoreBreakdown {
    fn new(qa: &QaPair) -> Self {
        Self { qid: qa.qid, frame_index: qa.frame_index, ..Default::default() }
    }

    fn with_f1(mut self, f: F1) -> Self {
        self.f1 = Some(f.f1);
        self.precision = Some(f.precision);
        self.recall = Some(f.recall);
        self
    }

    fn flagged(mut self, flag: &str) -> Self {
        self.flags.push(flag.to_string());
        self
    }
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<([A-Za-z0-9_.\-]+)>").unwrap())
}

/// Object ids tagged `<id>` in an answer, with the text up to the next tag.
pub fn tagged_segments(answer: &str) -> Vec<(String, String)> {
    let found: Vec<_> = tag_regex().captures_iter(answer).collect();
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, c) in found.iter().enumerate() {
        let whole = c.get(0).unwrap();
        let end = found.get(i + 1).map_or(answer.len(), |n| n.get(0).unwrap().start());
        let id = c[1].to_string();
        let seg = answer[whole.end()..end].to_string();
        match out.iter_mut().find(|(k, _)| *k == id) {
            Some((_, s)) => {
                s.push(' ');
                s.push_str(&seg);
            }
            None => out.push((id, seg)),
        }
    }
    out
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

/// Case-insensitive phrase match on word boundaries; `-` counts as a word
/// character so "forward" does not match inside "forward-left".
pub fn mentions(text: &str, phrase: &str) -> bool {
    let hay = text.to_lowercase();
    let needle = phrase.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = hay[from..].find(&needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before = hay[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after = hay[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before && after {
            return true;
        }
        from = start + needle.chars().next().map_or(1, |c| c.len_utf8());
    }
    false
}

/// Per-object judgement used by the multi-object score.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub object_scores: BTreeMap<String, f64>,
    pub extracted_command: Option<ActionKeys>,
    pub scalar_score: Option<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
}

/// Grades the parts of an answer that need interpretation.
pub trait Judge {
    fn judge(&self, qa: &QaPair, answer: &str) -> Result<JudgeVerdict, JudgeError>;
}

/// Rule-based judge that parses tags, numbers and keywords.
#[derive(Debug, Clone, Default)]
pub struct DeterministicJudge;

fn first_number(text: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());
    re.find(text).and_then(|m| m.as_str().parse().ok())
}

/// `Some(true)` for a leading yes, `Some(false)` for a leading no.
fn polarity(text: &str) -> Option<bool> {
    let first = text
        .trim_start()
        .split(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())?
        .to_lowercase();
    match first.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

fn object_score(cond: &ObjectCondition, segment: &str) -> f64 {
    if cond.attributes.is_empty() {
        return 1.0;
    }
    let hit = cond.attributes.values().filter(|kw| mentions(segment, kw)).count();
    hit as f64 / cond.attributes.len() as f64
}

fn speed_limit_score(gt: f64, answer: &str) -> Option<f64> {
    let v = first_number(answer)?;
    let e = v - gt;
    let s = if e > 0.0 { 1.0 - e / 20.0 } else { 1.0 + e / 40.0 };
    Some(s.clamp(0.0, 1.0))
}

fn brake_score(required: bool, class: &str, reason: &str, stationary: bool, answer: &str) -> Option<f64> {
    if stationary && class == SpeedKey::Stop.as_str() {
        let accepted = ["stop", "stopped", "remain stopped", "keep the current speed", "stay"];
        if accepted.iter().any(|p| mentions(answer, p)) {
            return Some(1.0);
        }
    }
    let said = polarity(answer)?;
    if said != required {
        return Some(0.0);
    }
    if !required {
        return Some(1.0);
    }
    Some(0.7 + if mentions(answer, reason) { 0.3 } else { 0.0 })
}

fn lane_score(required: bool, class: &str, answer: &str) -> Option<f64> {
    let said = polarity(answer)?;
    if said != required {
        return Some(0.0);
    }
    if !required {
        return Some(1.0);
    }
    let side = if class.ends_with("LEFT") {
        "left"
    } else if class.ends_with("RIGHT") {
        "right"
    } else {
        ""
    };
    let dir_ok = side.is_empty() || mentions(answer, side);
    let kinds: &[&str] = if class.starts_with("CHANGE_LANE") {
        &["change", "lane change"]
    } else if class.starts_with("DEVIATE") {
        &["shift", "deviate"]
    } else {
        &["turn", "u-turn"]
    };
    let kind_ok = kinds.iter().any(|k| mentions(answer, k));
    Some(0.5 + if dir_ok { 0.25 } else { 0.0 } + if kind_ok { 0.25 } else { 0.0 })
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

impl Judge for DeterministicJudge {
    fn judge(&self, qa: &QaPair, answer: &str) -> Result<JudgeVerdict, JudgeError> {
        let mut v = JudgeVerdict::default();
        match &qa.gt_payload {
            GtPayload::ObjectConditions { objects } => {
                let segs: BTreeMap<String, String> = tagged_segments(answer).into_iter().collect();
                for o in objects {
                    if let Some(seg) = segs.get(&o.id) {
                        v.object_scores.insert(o.id.clone(), object_score(o, seg));
                    }
                }
            }
            GtPayload::Keys { .. } => {
                let k = extract_keys(answer);
                v.extracted_command = (!k.is_empty()).then_some(k);
            }
            GtPayload::Scalar { value, .. } => v.scalar_score = speed_limit_score(*value, answer),
            GtPayload::Judgement { required, class, reason, stationary } => {
                v.scalar_score = if qa.qid == 13 {
                    lane_score(*required, class, answer)
                } else {
                    brake_score(*required, class, reason, *stationary, answer)
                };
            }
            GtPayload::Text { text } => {
                let (a, b) = (words(text), words(answer));
                let union = a.union(&b).count();
                v.scalar_score = Some(if union == 0 { 1.0 } else { a.intersection(&b).count() as f64 / union as f64 });
            }
            GtPayload::RankedObjects { .. } => {}
        }
        if v.scalar_score.is_none() && matches!(qa.gt_payload, GtPayload::Scalar { .. } | GtPayload::Judgement { .. }) {
            v.flags.push("parse-failure".into());
        }
        Ok(v)
    }
}

/// Ranked importance list: F1 times NDCG.
pub fn score_ranked(qa: &QaPair, answer: &str, w: &ScoreWeights) -> ScoreBreakdown {
    let out = ScoreBreakdown::new(qa);
    let GtPayload::RankedObjects { objects } = &qa.gt_payload else {
        return out.flagged("payload-mismatch");
    };
    let pred: Vec<String> = tagged_segments(answer).into_iter().map(|(id, _)| id).collect();
    if objects.is_empty() && pred.is_empty() {
        return ScoreBreakdown { final_score: 1.0, ..out };
    }
    if pred.is_empty() {
        return out.flagged("parse-failure");
    }
    let gt: Vec<&str> = objects.iter().map(|o| o.actor_id.as_str()).collect();
    let special: Vec<bool> = objects.iter().map(|o| o.is_role || o.is_dangerous).collect();
    let (weights, extra) = importance_weights(&special, w);
    let f = weighted_f1(&pred, &gt, &weights, extra);
    let n = ndcg(&pred, &gt, &weights);
    let mut out = out.with_f1(f);
    out.ndcg = Some(n);
    out.final_score = f.f1 * n;
    out
}

/// Listed objects with attributes: F1 times the base-weighted judge score.
pub fn score_multiobject(qa: &QaPair, answer: &str, w: &ScoreWeights, judge: &dyn Judge) -> ScoreBreakdown {
    let out = ScoreBreakdown::new(qa);
    let GtPayload::ObjectConditions { objects } = &qa.gt_payload else {
        return out.flagged("payload-mismatch");
    };
    let pred: Vec<String> = tagged_segments(answer).into_iter().map(|(id, _)| id).collect();
    if objects.is_empty() && pred.is_empty() {
        return ScoreBreakdown { final_score: 1.0, ..out };
    }
    let verdict = match judge.judge(qa, answer) {
        Ok(v) => v,
        Err(e) => return out.flagged(&format!("judge-error: {e}")),
    };
    let gt: Vec<&str> = objects.iter().map(|o| o.id.as_str()).collect();
    let special: Vec<bool> = objects.iter().map(|o| o.is_role || o.is_dangerous).collect();
    let (weights, _) = importance_weights(&special, w);
    let extra = if qa.qid == 47 { w.extra_collision } else { w.extra_harmless };
    let f = weighted_f1(&pred, &gt, &weights, extra);
    let (mut num, mut den) = (0.0, 0.0);
    let mut out = out.with_f1(f);
    for o in objects.iter().filter(|o| pred.contains(&o.id)) {
        let b = if o.is_role || o.is_dangerous { w.base_weight_special } else { w.base_weight_plain };
        let s = match verdict.object_scores.get(&o.id) {
            Some(s) => s.clamp(0.0, 1.0),
            None => {
                out.flags.push(format!("unjudged {}", o.id));
                0.0
            }
        };
        num += s * b;
        den += b;
    }
    let s = if den > 0.0 { num / den } else { 0.0 };
    out.object_agg = Some(s);
    out.final_score = f.f1 * s;
    out
}

/// Key F1 over {direction, speed} times the speed penalty.
pub fn score_action(qa: &QaPair, answer: &str, table: &SpeedPenaltyTable) -> ScoreBreakdown {
    let out = ScoreBreakdown::new(qa);
    let GtPayload::Keys { keys: gt } = &qa.gt_payload else {
        return out.flagged("payload-mismatch");
    };
    let pred = extract_keys(answer);
    if pred.is_empty() {
        return out.flagged("no-keys");
    }
    let mut hits = 0;
    if pred.direction.is_some() && pred.direction == gt.direction {
        hits += 1;
    }
    if pred.speed.is_some() && pred.speed == gt.speed {
        hits += 1;
    }
    let f1 = hits as f64 / 2.0;
    let penalty = match (pred.speed, gt.speed) {
        (Some(p), Some(g)) => table.get(p, g),
        _ => 1.0,
    };
    let mut out = out.with_f1(F1 { precision: f1, recall: f1, f1 });
    out.speed_penalty = Some(penalty);
    out.final_score = f1 * penalty;
    out
}

/// Scalar judge score for free-text questions.
pub fn score_guideline(qa: &QaPair, answer: &str, judge: &dyn Judge) -> ScoreBreakdown {
    let mut out = ScoreBreakdown::new(qa);
    match judge.judge(qa, answer) {
        Ok(v) => {
            out.flags.extend(v.flags);
            out.final_score = v.scalar_score.unwrap_or(0.0).clamp(0.0, 1.0);
        }
        Err(e) => out.flags.push(format!("judge-error: {e}")),
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct Scorer {
    pub weights: ScoreWeights,
    pub penalties: SpeedPenaltyTable,
}

impl Scorer {
    /// Picks the rubric from the expert payload.
    pub fn score(&self, qa: &QaPair, answer: &str, judge: &dyn Judge) -> ScoreBreakdown {
        match &qa.gt_payload {
            GtPayload::RankedObjects { .. } => score_ranked(qa, answer, &self.weights),
            GtPayload::ObjectConditions { .. } => score_multiobject(qa, answer, &self.weights, judge),
            GtPayload::Keys { .. } => score_action(qa, answer, &self.penalties),
            _ => score_guideline(qa, answer, judge),
        }
    }
}

/// Result-table columns, in order, with the question each one grades.
pub const TABLE_COLUMNS: [(&str, u32); 8] = [
    ("Imp. Obj.", 19),
    ("T. Sign", 15),
    ("S. Limit", 7),
    ("Col. Obj.", 47),
    ("C. Lane", 13),
    ("Brake", 8),
    ("A. Desc", 43),
    ("A. Keys", 50),
];

/// Mean final score per column, ×100. Columns without scored frames are absent.
pub fn aggregate(scores: &[ScoreBreakdown]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (name, qid) in TABLE_COLUMNS {
        let xs: Vec<f64> = scores.iter().filter(|s| s.qid == qid).map(|s| s.final_score).collect();
        if !xs.is_empty() {
            out.insert(name.to_string(), 100.0 * xs.iter().sum::<f64>() / xs.len() as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::ImportanceRecord;
    use crate::keys::DirectionKey;
    use approx::assert_abs_diff_eq;

    fn qa(qid: u32, payload: GtPayload) -> QaPair {
        QaPair { qid, question_text: String::new(), gt_answer_text: String::new(), gt_payload: payload, frame_index: 0 }
    }

    fn rec(id: &str, role: bool) -> ImportanceRecord {
        ImportanceRecord { actor_id: id.into(), is_role: role, is_dangerous: false, distance: 1.0 }
    }

    fn cond(id: &str, special: bool, attrs: &[(&str, &str)]) -> ObjectCondition {
        ObjectCondition {
            id: id.into(),
            is_role: special,
            is_dangerous: false,
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    #[test]
    fn position_weight_examples() {
        let w = ScoreWeights::default();
        assert_eq!(position_weights(4, &w), vec![4.0, 3.0, 2.0, 1.0]);
        assert_abs_diff_eq!(position_weights(1, &w)[0], 0.25);
        assert_eq!(position_weights(2, &w), vec![1.5, 0.5]);
        assert!(position_weights(0, &w).is_empty());
        let (ws, extra) = importance_weights(&[true, false, false, false], &w);
        assert_eq!(ws, vec![12.0, 3.0, 2.0, 1.0]);
        assert_eq!(extra, 0.5);
    }

    #[test]
    fn ndcg_examples() {
        let ws = [1.5, 0.5];
        assert_eq!(ndcg(&["A", "B"], &["A", "B"], &ws), 1.0);
        assert_abs_diff_eq!(ndcg(&["B", "A"], &["A", "B"], &ws), 0.7967, epsilon = 1e-4);
        assert_eq!(ndcg(&["C"], &["A", "B"], &ws), 0.0);
    }

    #[test]
    fn f1_examples() {
        let f = weighted_f1(&["A", "C"], &["A", "B"], &[1.5, 0.5], 0.25);
        assert_abs_diff_eq!(f.precision, 1.5 / 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(f.recall, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(f.f1, 0.8, epsilon = 1e-12);
        let none: [&str; 0] = [];
        assert_eq!(weighted_f1(&none, &["A"], &[1.0], 0.25), F1::default());
    }

    #[test]
    fn ranked_scores() {
        let w = ScoreWeights::default();
        let q = qa(19, GtPayload::RankedObjects { objects: vec![rec("a", false), rec("b", false)] });
        assert_eq!(score_ranked(&q, "<a> then <b>", &w).final_score, 1.0);
        assert_abs_diff_eq!(score_ranked(&q, "<b>, <a>", &w).final_score, 0.7967, epsilon = 1e-4);
        assert_eq!(score_ranked(&q, "<z>", &w).final_score, 0.0);
        let bad = score_ranked(&q, "a car", &w);
        assert_eq!(bad.final_score, 0.0);
        assert_eq!(bad.flags, vec!["parse-failure"]);
        let empty = qa(19, GtPayload::RankedObjects { objects: vec![] });
        assert_eq!(score_ranked(&empty, "There is nothing.", &w).final_score, 1.0);
    }

    #[test]
    fn multiobject_scores() {
        let w = ScoreWeights::default();
        let objs = vec![cond("a", true, &[("reason", "blocking")]), cond("b", false, &[("reason", "oncoming"), ("action", "keeping")])];
        let q = qa(15, GtPayload::ObjectConditions { objects: objs.clone() });
        let r = score_multiobject(&q, "<a> is blocking. <b> is oncoming; keeping speed.", &w, &DeterministicJudge);
        assert_eq!(r.final_score, 1.0);
        let r = score_multiobject(&q, "<a> is blocking. <b> is oncoming.", &w, &DeterministicJudge);
        assert_abs_diff_eq!(r.object_agg.unwrap(), 0.875, epsilon = 1e-12);
        let harmless = score_multiobject(&q, "<a> blocking <b> oncoming keeping <c>", &w, &DeterministicJudge);
        let q47 = qa(47, GtPayload::ObjectConditions { objects: objs });
        let collision = score_multiobject(&q47, "<a> blocking <b> oncoming keeping <c>", &w, &DeterministicJudge);
        assert!(collision.f1.unwrap() < harmless.f1.unwrap());
    }

    #[test]
    fn penalty_table_constraints() {
        let t = SpeedPenaltyTable::default();
        for k in SpeedKey::ALL {
            assert_eq!(t.get(k, k), 1.0);
        }
        let min = t.get(SpeedKey::Accelerate, SpeedKey::Stop);
        for p in SpeedKey::ALL {
            for g in SpeedKey::ALL {
                if (p, g) != (SpeedKey::Accelerate, SpeedKey::Stop) {
                    assert!(t.get(p, g) > min, "{p:?} {g:?}");
                }
                assert!((0.0..=1.0).contains(&t.get(p, g)));
            }
        }
        assert_eq!(t.get(SpeedKey::Accelerate, SpeedKey::Keep), 1.0);
    }

    #[test]
    fn action_scores() {
        let t = SpeedPenaltyTable::default();
        let q = qa(50, GtPayload::Keys { keys: ActionKeys::new(DirectionKey::FollowLane, SpeedKey::Stop) });
        assert_eq!(score_action(&q, "FOLLOW_LANE, STOP", &t).final_score, 1.0);
        assert_eq!(score_action(&q, "FOLLOW_LANE, ACCELERATE", &t).final_score, 0.5 * t.get(SpeedKey::Accelerate, SpeedKey::Stop));
        let k = qa(50, GtPayload::Keys { keys: ActionKeys::new(DirectionKey::FollowLane, SpeedKey::Keep) });
        assert_eq!(score_action(&k, "FOLLOW_LANE, ACCELERATE", &t).final_score, 0.5);
        assert_eq!(score_action(&k, "drive on", &t).final_score, 0.0);
    }

    #[test]
    fn guideline_scores() {
        let j = DeterministicJudge;
        let q7 = qa(7, GtPayload::Scalar { value: 50.0, unit: "km/h".into() });
        assert_eq!(score_guideline(&q7, "50 km/h", &j).final_score, 1.0);
        let over = score_guideline(&q7, "60 km/h", &j).final_score;
        let under = score_guideline(&q7, "40 km/h", &j).final_score;
        assert!(over < under);
        assert_eq!(score_guideline(&q7, "unknown", &j).flags, vec!["parse-failure"]);
        let q8 = qa(8, GtPayload::Judgement { required: true, class: "STOP".into(), reason: "red light".into(), stationary: true });
        assert_eq!(score_guideline(&q8, "Stop immediately.", &j).final_score, 1.0);
        assert_eq!(score_guideline(&q8, "No, keep the current speed.", &j).final_score, 1.0);
        let moving = qa(8, GtPayload::Judgement { required: true, class: "DECELERATE".into(), reason: "vehicle ahead".into(), stationary: false });
        assert_abs_diff_eq!(score_guideline(&moving, "Yes, slow down.", &j).final_score, 0.7);
        assert_eq!(score_guideline(&moving, "Yes, the vehicle ahead is slow.", &j).final_score, 1.0);
        assert_eq!(score_guideline(&moving, "No.", &j).final_score, 0.0);
        let q13 = qa(13, GtPayload::Judgement { required: true, class: "CHANGE_LANE_LEFT".into(), reason: "obstacle".into(), stationary: false });
        assert_eq!(score_guideline(&q13, "Yes, change to the left lane.", &j).final_score, 1.0);
        assert_eq!(score_guideline(&q13, "Yes, change to the right lane.", &j).final_score, 0.75);
    }

    #[test]
    fn phrase_matching() {
        assert!(mentions("Moving Forward.", "forward"));
        assert!(!mentions("moving forward-left", "forward"));
        assert!(mentions("it is off the road now", "off the road"));
        assert_eq!(tagged_segments("<a> x <b> y <a> z"), vec![("a".into(), " x   z".into()), ("b".into(), " y ".into())]);
    }
}
