//! DriveCommenter: the privileged rule-based expert. It answers the question
//! catalog from full world state and decides the reference action for every
//! reachable state, including off-road and wrong-lane ones.

mod decide;
mod importance;
mod ood;
mod questions;
mod scene;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keys::{ActionKeys, DirectionKey, SpeedKey};
use crate::world::WorldState;

pub use importance::ImportanceRecord;
pub use ood::{OodKind, OodStatus, RecoveryDirection};
pub use questions::{
    question_registry, spec_for, AnswerKind, GtPayload, ObjectCondition, QaPair, QuestionCategory,
    QuestionSpec, MANDATED_QIDS, TUNNEL_SENTENCE, WEATHER_QID,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub waypoint_radius: f64,
    /// Heading error that starts an orientation recovery.
    pub orientation_trigger_deg: f64,
    pub mild_misalignment_deg: f64,
    pub strong_misalignment_deg: f64,
    pub importance_radius: f64,
    /// Objects further behind than this are ignored unless role or dangerous.
    pub behind_cutoff: f64,
    pub danger_horizon: f64,
    pub danger_step: f64,
    pub corridor_margin: f64,
    pub obstacle_lookahead: f64,
    pub headway_stop: f64,
    pub headway_brake: f64,
    pub headway_follow: f64,
    pub ood_speed_cap: f64,
    pub turn_speed_cap: f64,
    pub uturn_speed_cap: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            waypoint_radius: crate::world::DEFAULT_WAYPOINT_RADIUS,
            orientation_trigger_deg: 15.0,
            mild_misalignment_deg: 20.0,
            strong_misalignment_deg: 100.0,
            importance_radius: 50.0,
            behind_cutoff: 8.0,
            danger_horizon: 4.0,
            danger_step: 0.5,
            corridor_margin: 0.5,
            obstacle_lookahead: 50.0,
            headway_stop: 1.0,
            headway_brake: 2.0,
            headway_follow: 3.0,
            ood_speed_cap: 5.0,
            turn_speed_cap: 6.0,
            uturn_speed_cap: 3.0,
        }
    }
}

/// Why the expert chose its speed key; used to phrase answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    Clear,
    SpeedLimit,
    RedLight,
    YellowLight,
    StopSign,
    LeadVehicle,
    Obstacle,
    Oncoming,
    Crossing,
    OffRoad,
    Misalignment,
    Junction,
    Emergency,
    SideTraffic,
}

impl Cause {
    /// Phrase that names the cause in answers and that graders look for.
    pub fn keyword(&self) -> &'static str {
        match self {
            Cause::Clear => "clear",
            Cause::SpeedLimit => "speed limit",
            Cause::RedLight => "red light",
            Cause::YellowLight => "yellow light",
            Cause::StopSign => "stop sign",
            Cause::LeadVehicle => "vehicle ahead",
            Cause::Obstacle => "obstacle",
            Cause::Oncoming => "oncoming",
            Cause::Crossing => "crossing",
            Cause::OffRoad => "off the road",
            Cause::Misalignment => "heading",
            Cause::Junction => "junction",
            Cause::Emergency => "emergency vehicle",
            Cause::SideTraffic => "traffic in the target lane",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertDecision {
    pub direction: DirectionKey,
    pub speed: SpeedKey,
    pub rationale: String,
    pub speed_cause: Cause,
}

impl ExpertDecision {
    pub fn keys(&self) -> ActionKeys {
        ActionKeys::new(self.direction, self.speed)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExpertError {
    #[error("question {qid} is not registered; registered: {registered:?}")]
    UnknownQid { qid: u32, registered: Vec<u32> },
}

/// Everything the expert derives from one state, computed once per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnalysis {
    pub ood: OodStatus,
    pub decision: ExpertDecision,
    pub important: Vec<ImportanceRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct DriveCommenter {
    pub config: ExpertConfig,
}

impl DriveCommenter {
    pub fn new(config: ExpertConfig) -> Self {
        Self { config }
    }

    pub fn classify_ood(&self, world: &WorldState) -> OodStatus {
        ood::classify(world, &self.config)
    }

    pub fn decide(&self, world: &WorldState, ood: &OodStatus) -> ExpertDecision {
        decide::decide(world, ood, &self.config)
    }

    pub fn rank_important_objects(&self, world: &WorldState) -> Vec<ImportanceRecord> {
        importance::rank(world, &self.config)
    }

    pub fn is_dangerous(&self, world: &WorldState, actor_id: &str) -> bool {
        world
            .actor(actor_id)
            .is_some_and(|a| importance::is_dangerous(world, a, &self.config))
    }

    pub fn analyze(&self, world: &WorldState) -> FrameAnalysis {
        let ood = self.classify_ood(world);
        let decision = self.decide(world, &ood);
        let important = self.rank_important_objects(world);
        FrameAnalysis { ood, decision, important }
    }

    pub fn answer_question(
        &self,
        world: &WorldState,
        analysis: &FrameAnalysis,
        qid: u32,
    ) -> Result<QaPair, ExpertError> {
        questions::answer(world, analysis, &self.config, qid)
    }

    pub fn annotate_frame(&self, world: &WorldState, qids: &[u32]) -> Result<Vec<QaPair>, ExpertError> {
        let analysis = self.analyze(world);
        qids.iter().map(|q| self.answer_question(world, &analysis, *q)).collect()
    }
}
