//! Question catalog and ground-truth answers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{compass8, wrap_angle};
use crate::keys::{ActionKeys, DirectionKey, SpeedKey};
use crate::world::{ActorKind, ControlKind, LightState, TimeOfDay, WeatherCondition, WorldState};

use super::importance::ImportanceRecord;
use super::ood::OodKind;
use super::{ExpertConfig, ExpertError, FrameAnalysis};

pub const MANDATED_QIDS: [u32; 9] = [19, 15, 7, 24, 13, 47, 8, 43, 50];
pub const WEATHER_QID: u32 = 37;
pub const TUNNEL_SENTENCE: &str = "It is impossible to infer the current time and weather from visual information, because the ego vehicle is currently inside a tunnel.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionCategory {
    Perception,
    Prediction,
    Planning,
    Behavior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerKind {
    FreeText,
    RankedObjectList,
    ObjectConditionList,
    KeyValue,
}

impl AnswerKind {
    pub fn accepts(&self, payload: &GtPayload) -> bool {
        matches!(
            (self, payload),
            (AnswerKind::RankedObjectList, GtPayload::RankedObjects { .. })
                | (AnswerKind::ObjectConditionList, GtPayload::ObjectConditions { .. })
                | (AnswerKind::KeyValue, GtPayload::Keys { .. })
                | (
                    AnswerKind::FreeText,
                    GtPayload::Scalar { .. } | GtPayload::Judgement { .. } | GtPayload::Text { .. } | GtPayload::Keys { .. }
                )
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionSpec {
    pub qid: u32,
    pub category: QuestionCategory,
    /// `{vehicles}` is replaced by the important vehicle tags.
    pub template: &'static str,
    pub answer_kind: AnswerKind,
}

const REGISTRY: [QuestionSpec; 10] = [
    QuestionSpec {
        qid: 7,
        category: QuestionCategory::Planning,
        template: "What is the current speed limit?",
        answer_kind: AnswerKind::FreeText,
    },
    QuestionSpec {
        qid: 8,
        category: QuestionCategory::Planning,
        template: "Does the ego vehicle need to brake? Why?",
        answer_kind: AnswerKind::FreeText,
    },
    QuestionSpec {
        qid: 13,
        category: QuestionCategory::Planning,
        template: "Must the ego vehicle change lane or deviate from the lane now? Why?",
        answer_kind: AnswerKind::FreeText,
    },
    QuestionSpec {
        qid: 15,
        category: QuestionCategory::Planning,
        template: "Identify all traffic lights and signs affecting the ego vehicle in current scene. Based on these traffic signs, what actions should the ego vehicle take respectively?",
        answer_kind: AnswerKind::ObjectConditionList,
    },
    QuestionSpec {
        qid: 19,
        category: QuestionCategory::Perception,
        template: "What are the important objects in the scene? List them from most to least important.",
        answer_kind: AnswerKind::RankedObjectList,
    },
    QuestionSpec {
        qid: 24,
        category: QuestionCategory::Prediction,
        template: "The important vehicles are {vehicles}. What is the rough moving speed and moving direction of them?",
        answer_kind: AnswerKind::ObjectConditionList,
    },
    QuestionSpec {
        qid: 37,
        category: QuestionCategory::Perception,
        template: "What is current time and weather?",
        answer_kind: AnswerKind::FreeText,
    },
    QuestionSpec {
        qid: 43,
        category: QuestionCategory::Behavior,
        template: "What is the correct action for the ego vehicle to take now?",
        answer_kind: AnswerKind::FreeText,
    },
    QuestionSpec {
        qid: 47,
        category: QuestionCategory::Prediction,
        template: "The important vehicles are {vehicles}. List potential overlap vehicles, overlap reasons and the actions that could lead to a collision.",
        answer_kind: AnswerKind::ObjectConditionList,
    },
    QuestionSpec {
        qid: 50,
        category: QuestionCategory::Behavior,
        template: "Provide the appropriate behavior for the ego vehicle, FOLLOW_LANE, CHANGE_LANE_LEFT, CHANGE_LANE_RIGHT, GO_STRAIGHT, TURN_LEFT, TURN_RIGHT, DEVIATE_LEFT, or DEVIATE_RIGHT and the Speed key, which can be KEEP, ACCELERATE, DECELERATE, or STOP.",
        answer_kind: AnswerKind::KeyValue,
    },
];

/// Registered questions, ascending by qid.
pub fn question_registry() -> &'static [QuestionSpec] {
    &REGISTRY
}

pub fn spec_for(qid: u32) -> Result<&'static QuestionSpec, ExpertError> {
    REGISTRY.iter().find(|q| q.qid == qid).ok_or_else(|| ExpertError::UnknownQid {
        qid,
        registered: REGISTRY.iter().map(|q| q.qid).collect(),
    })
}

/// One graded object with its expected attributes, keyed by attribute name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectCondition {
    pub id: String,
    pub is_role: bool,
    pub is_dangerous: bool,
    /// Attribute name to the keyword an answer must mention.
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GtPayload {
    RankedObjects { objects: Vec<ImportanceRecord> },
    ObjectConditions { objects: Vec<ObjectCondition> },
    Keys { keys: ActionKeys },
    Scalar { value: f64, unit: String },
    /// Yes/no question with the expected class and reason keyword.
    Judgement { required: bool, class: String, reason: String, stationary: bool },
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub qid: u32,
    pub question_text: String,
    pub gt_answer_text: String,
    pub gt_payload: GtPayload,
    pub frame_index: u64,
}

pub fn speed_bucket(speed: f64) -> &'static str {
    if speed <= 0.1 {
        "stationary"
    } else if speed <= 2.0 {
        "slow"
    } else if speed <= 8.0 {
        "moderate"
    } else {
        "fast"
    }
}

/// Important non-pedestrian actors, in importance order.
fn important_vehicles<'a>(world: &'a WorldState, analysis: &'a FrameAnalysis) -> Vec<(&'a ImportanceRecord, &'a crate::world::Actor)> {
    analysis
        .important
        .iter()
        .filter_map(|r| world.actor(&r.actor_id).map(|a| (r, a)))
        .filter(|(_, a)| a.kind != ActorKind::Pedestrian)
        .collect()
}

fn tag_list(tags: &[String]) -> String {
    if tags.is_empty() {
        "none".into()
    } else {
        tags.join(", ")
    }
}

pub(super) fn answer(
    world: &WorldState,
    analysis: &FrameAnalysis,
    cfg: &ExpertConfig,
    qid: u32,
) -> Result<QaPair, ExpertError> {
    let spec = spec_for(qid)?;
    let vehicles: Vec<String> = important_vehicles(world, analysis)
        .iter()
        .map(|(_, a)| a.tag())
        .collect();
    let question_text = spec.template.replace("{vehicles}", &tag_list(&vehicles));
    let (gt_answer_text, gt_payload) = match qid {
        7 => q7(world),
        8 => q8(world, analysis),
        13 => q13(analysis),
        15 => q15(world, cfg),
        19 => q19(world, analysis),
        24 => q24(world, analysis),
        37 => q37(world),
        43 => q43(analysis),
        47 => q47(world, analysis),
        50 => {
            let keys = analysis.decision.keys();
            (keys.render(), GtPayload::Keys { keys })
        }
        _ => unreachable!("registered qid without an answer"),
    };
    Ok(QaPair {
        qid,
        question_text,
        gt_answer_text,
        gt_payload,
        frame_index: world.frame_index,
    })
}

fn kmh(v: f64) -> f64 {
    (v * 3.6).round()
}

fn q7(world: &WorldState) -> (String, GtPayload) {
    let v = kmh(world.effective_speed_limit());
    (
        format!("The current speed limit is {v:.0} km/h."),
        GtPayload::Scalar { value: v, unit: "km/h".into() },
    )
}

fn q8(world: &WorldState, analysis: &FrameAnalysis) -> (String, GtPayload) {
    let d = &analysis.decision;
    let stationary = world.ego.speed < 0.1;
    let required = matches!(d.speed, SpeedKey::Stop | SpeedKey::Decelerate);
    let reason = d.speed_cause.keyword();
    let text = if required && stationary && d.speed == SpeedKey::Stop {
        format!("Yes, the ego vehicle is stationary and should remain stopped because of the {reason}. {}", d.rationale)
    } else if required {
        format!("Yes, the ego vehicle needs to {} because of the {reason}. {}", d.speed.describe(), d.rationale)
    } else {
        format!("No, the ego vehicle does not need to brake. {}", d.rationale)
    };
    (
        text,
        GtPayload::Judgement {
            required,
            class: d.speed.as_str().into(),
            reason: reason.into(),
            stationary,
        },
    )
}

fn q13(analysis: &FrameAnalysis) -> (String, GtPayload) {
    let d = &analysis.decision;
    let off_junction_turn = d.direction.is_junction_key() && analysis.ood.kind == OodKind::LaneOrientation;
    let required = matches!(
        d.direction,
        DirectionKey::ChangeLaneLeft | DirectionKey::ChangeLaneRight | DirectionKey::DeviateLeft | DirectionKey::DeviateRight
    ) || off_junction_turn;
    let reason = match analysis.ood.kind {
        OodKind::RoadRecoverable => "off the road",
        OodKind::LaneOrientation => "heading",
        OodKind::LaneLateral => "route lane",
        _ => match d.direction {
            DirectionKey::ChangeLaneLeft | DirectionKey::ChangeLaneRight => "obstacle",
            DirectionKey::DeviateLeft | DirectionKey::DeviateRight => "oncoming",
            _ => "none",
        },
    };
    let text = if required {
        format!("Yes, the ego vehicle must {} now. {}", d.direction.describe(), d.rationale)
    } else {
        format!("No, the ego vehicle does not need to change lanes or deviate from the lane now. {}", d.rationale)
    };
    (
        text,
        GtPayload::Judgement {
            required,
            class: d.direction.as_str().into(),
            reason: reason.into(),
            stationary: false,
        },
    )
}

fn q15(world: &WorldState, cfg: &ExpertConfig) -> (String, GtPayload) {
    let ego = world.ego.pose;
    let mut found: Vec<(f64, &crate::world::TrafficControl)> = world
        .controls
        .iter()
        .filter(|c| c.affects_ego)
        .filter_map(|c| {
            let dist = c.pose.position().dist(ego.position());
            let (lon, _) = ego.to_local(c.pose.position());
            (dist <= cfg.importance_radius && lon > 0.0).then_some((dist, c))
        })
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    if found.is_empty() {
        return (
            "There are no traffic lights or signs affecting the ego vehicle.".into(),
            GtPayload::ObjectConditions { objects: Vec::new() },
        );
    }
    let mut sentences = Vec::new();
    let mut objects = Vec::new();
    for (dist, c) in found {
        let mut attributes = BTreeMap::new();
        let (kind_kw, action_kw, sentence) = match c.kind {
            ControlKind::TrafficLight => {
                let state = c.state.unwrap_or(LightState::Green);
                attributes.insert("state".into(), state.as_str().into());
                let (kw, act) = match state {
                    LightState::Red => ("stop", "stop at the stop line"),
                    LightState::Yellow => ("slow", "slow down and prepare to stop"),
                    LightState::Green => ("proceed", "proceed with caution"),
                };
                ("light", kw, format!("{} is a {} traffic light {dist:.0} m ahead; the ego vehicle should {act}.", c.tag(), state.as_str()))
            }
            ControlKind::StopSign => {
                let cleared = world.ego.cleared_stops.contains(&c.id);
                let (kw, act) = if cleared {
                    ("proceed", "proceed since it has already stopped")
                } else {
                    ("stop", "stop completely before the sign")
                };
                ("stop", kw, format!("{} is a stop sign {dist:.0} m ahead; the ego vehicle should {act}.", c.tag()))
            }
            ControlKind::SpeedLimitSign => {
                let v = kmh(c.value.unwrap_or(0.0));
                attributes.insert("value".into(), format!("{v:.0}"));
                ("limit", "limit", format!("{} is a {v:.0} km/h speed limit sign {dist:.0} m ahead; the ego vehicle should limit its speed to {v:.0} km/h.", c.tag()))
            }
            ControlKind::YieldSign => (
                "yield",
                "yield",
                format!("{} is a yield sign {dist:.0} m ahead; the ego vehicle should yield to crossing traffic.", c.tag()),
            ),
            ControlKind::ConstructionWarning | ControlKind::ConstructionCone => (
                "construction",
                "slow",
                format!("{} is a {} {dist:.0} m ahead; the ego vehicle should slow down and drive carefully.", c.tag(), c.kind.describe()),
            ),
        };
        attributes.insert("kind".into(), kind_kw.into());
        attributes.insert("action".into(), action_kw.into());
        sentences.push(sentence);
        objects.push(ObjectCondition {
            id: c.id.clone(),
            is_role: false,
            is_dangerous: false,
            attributes,
        });
    }
    (sentences.join(" "), GtPayload::ObjectConditions { objects })
}

fn q19(world: &WorldState, analysis: &FrameAnalysis) -> (String, GtPayload) {
    let objects = analysis.important.clone();
    if objects.is_empty() {
        return (
            "There are no important objects in the scene.".into(),
            GtPayload::RankedObjects { objects },
        );
    }
    let parts: Vec<String> = objects
        .iter()
        .filter_map(|r| world.actor(&r.actor_id))
        .map(|a| format!("{} ({}, {})", a.tag(), a.kind.as_str(), a.name))
        .collect();
    (
        format!("The important objects from most to least important are: {}.", parts.join(", ")),
        GtPayload::RankedObjects { objects },
    )
}

fn q24(world: &WorldState, analysis: &FrameAnalysis) -> (String, GtPayload) {
    let list = important_vehicles(world, analysis);
    if list.is_empty() {
        return (
            "There are no important vehicles.".into(),
            GtPayload::ObjectConditions { objects: Vec::new() },
        );
    }
    let ego_heading = world.ego.pose.heading;
    let mut sentences = Vec::new();
    let mut objects = Vec::new();
    for (rec, a) in list {
        let bucket = speed_bucket(a.speed);
        let mut attributes = BTreeMap::new();
        attributes.insert("speed".to_string(), bucket.to_string());
        if bucket == "stationary" {
            sentences.push(format!("{} is stationary.", a.tag()));
        } else {
            let dir = compass8(wrap_angle(a.pose.heading - ego_heading));
            attributes.insert("direction".into(), dir.into());
            sentences.push(format!("{} is moving {dir} relative to the ego vehicle at a {bucket} speed.", a.tag()));
        }
        objects.push(ObjectCondition {
            id: a.id.clone(),
            is_role: rec.is_role,
            is_dangerous: rec.is_dangerous,
            attributes,
        });
    }
    (sentences.join(" "), GtPayload::ObjectConditions { objects })
}

fn q37(world: &WorldState) -> (String, GtPayload) {
    let text = if world.weather.in_tunnel {
        TUNNEL_SENTENCE.to_string()
    } else {
        let time = match world.weather.time_of_day {
            TimeOfDay::Day => "daytime",
            TimeOfDay::Night => "night",
        };
        let weather = match world.weather.condition {
            WeatherCondition::Clear => "the weather is clear",
            WeatherCondition::Rain => "it is raining, which reduces visibility and grip",
            WeatherCondition::Fog => "it is foggy, which reduces visibility",
            WeatherCondition::Flooded => "the road is flooded, which increases braking distance",
        };
        format!("It is {time} and {weather}.")
    };
    (text.clone(), GtPayload::Text { text })
}

fn q43(analysis: &FrameAnalysis) -> (String, GtPayload) {
    let d = &analysis.decision;
    let keys = d.keys();
    (
        format!(
            "The ego vehicle should {} and {}. {} Action: {}.",
            d.direction.describe(),
            d.speed.describe(),
            d.rationale,
            keys.render()
        ),
        GtPayload::Keys { keys },
    )
}

fn q47(world: &WorldState, analysis: &FrameAnalysis) -> (String, GtPayload) {
    let ep = super::scene::EgoPath::of(world);
    let mut sentences = Vec::new();
    let mut objects = Vec::new();
    for (rec, a) in important_vehicles(world, analysis).into_iter().filter(|(r, _)| r.is_dangerous) {
        let h = super::scene::hit(&ep.path, ep.lane_width, a);
        let (reason, action, why) = match &h {
            Some(h) if h.in_lane && super::scene::is_blockage(h) => ("blocking", "accelerating", "it is blocking the ego lane"),
            Some(h) if h.in_lane && h.is_oncoming() => ("oncoming", "keeping", "it is oncoming and partly in the ego lane"),
            Some(h) if h.in_lane && h.is_same_direction() => ("ahead", "accelerating", "it is ahead in the ego lane"),
            _ => ("crossing", "keeping", "it is crossing the ego route"),
        };
        let mut attributes = BTreeMap::new();
        attributes.insert("reason".to_string(), reason.to_string());
        attributes.insert("action".to_string(), action.to_string());
        let act_text = if action == "accelerating" {
            "accelerating toward it"
        } else {
            "keeping the current speed and path"
        };
        sentences.push(format!("{} may overlap with the ego vehicle because {why}; {act_text} could lead to a collision.", a.tag()));
        objects.push(ObjectCondition {
            id: a.id.clone(),
            is_role: rec.is_role,
            is_dangerous: rec.is_dangerous,
            attributes,
        });
    }
    if objects.is_empty() {
        return (
            "No vehicle is expected to overlap with the ego path.".into(),
            GtPayload::ObjectConditions { objects },
        );
    }
    (sentences.join(" "), GtPayload::ObjectConditions { objects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::DriveCommenter;
    use crate::keys::extract_keys;
    use crate::world::{bundled_scenario, bundled_scenarios};

    #[test]
    fn registry_has_mandated_set() {
        for q in MANDATED_QIDS {
            assert!(spec_for(q).is_ok(), "{q}");
        }
        let mut ids: Vec<u32> = REGISTRY.iter().map(|q| q.qid).collect();
        ids.dedup();
        assert_eq!(ids.len(), REGISTRY.len());
    }

    #[test]
    fn unknown_qid_lists_registered() {
        let w = bundled_scenario("FollowLeadVehicle", 0).unwrap();
        let dc = DriveCommenter::default();
        let a = dc.analyze(&w);
        let err = dc.answer_question(&w, &a, 99).unwrap_err();
        let ExpertError::UnknownQid { qid, registered } = err;
        assert_eq!(qid, 99);
        assert!(registered.contains(&50));
    }

    #[test]
    fn payload_kinds_and_q43_consistency() {
        let dc = DriveCommenter::default();
        for w in bundled_scenarios(0) {
            let mut qids = MANDATED_QIDS.to_vec();
            qids.push(WEATHER_QID);
            let pairs = dc.annotate_frame(&w, &qids).unwrap();
            for p in &pairs {
                assert!(spec_for(p.qid).unwrap().answer_kind.accepts(&p.gt_payload), "qid {}", p.qid);
                assert!(!p.gt_answer_text.is_empty());
            }
            let q50 = pairs.iter().find(|p| p.qid == 50).unwrap();
            let q43 = pairs.iter().find(|p| p.qid == 43).unwrap();
            assert_eq!(q50.gt_payload, GtPayload::Keys { keys: extract_keys(&q43.gt_answer_text) });
        }
    }

    #[test]
    fn remembered_limit_after_sign() {
        let mut w = bundled_scenario("StopSignSpeedLimit", 0).unwrap();
        w.ego.remembered_speed_limit = Some(30.0 / 3.6);
        w.ego.pose.x = 100.0;
        let dc = DriveCommenter::default();
        let p = dc.annotate_frame(&w, &[7]).unwrap().remove(0);
        assert_eq!(p.gt_payload, GtPayload::Scalar { value: 30.0, unit: "km/h".into() });
    }

    #[test]
    fn tunnel_sentence() {
        let mut w = bundled_scenario("StopSignSpeedLimit", 0).unwrap();
        w.weather.in_tunnel = true;
        let p = DriveCommenter::default().annotate_frame(&w, &[WEATHER_QID]).unwrap().remove(0);
        assert!(p.gt_answer_text.contains(TUNNEL_SENTENCE));
    }

    #[test]
    fn buckets() {
        assert_eq!(speed_bucket(0.0), "stationary");
        assert_eq!(speed_bucket(1.0), "slow");
        assert_eq!(speed_bucket(5.0), "moderate");
        assert_eq!(speed_bucket(9.0), "fast");
    }
}
