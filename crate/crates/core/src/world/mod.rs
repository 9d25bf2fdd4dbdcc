//! Deterministic 2D lane world: scenario state, kinematics and privileged queries.

mod query;
mod scenario;
mod sim;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Obb, Point, Polyline, Pose};

pub use query::{ContainingLane, RouteSpan, WaypointMatch, DEFAULT_WAYPOINT_RADIUS};
pub use scenario::{
    bundled_scenario, bundled_scenario_source, bundled_scenarios, load_scenario, ScenarioError,
    BUNDLED_SCENARIO_NAMES, SCENARIO_FORMAT_VERSION,
};
pub use sim::{refresh_derived, step, step_with, VehicleControl, VehicleParams, DEFAULT_DT, TRAIL_INTERVAL_TICKS};

pub type LaneId = String;
pub type ActorId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionFlag {
    SameDirection,
    OppositeDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Marking {
    Solid,
    Broken,
    #[default]
    None,
}

impl Marking {
    pub fn as_str(&self) -> &'static str {
        match self {
            Marking::Solid => "solid",
            Marking::Broken => "broken",
            Marking::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub centerline: Polyline,
    pub width: f64,
    pub direction_flag: DirectionFlag,
    pub left_neighbor: Option<LaneId>,
    pub right_neighbor: Option<LaneId>,
    pub left_marking: Marking,
    pub right_marking: Marking,
    pub speed_limit: Option<f64>,
    pub in_junction: bool,
    #[serde(default)]
    pub successors: Vec<LaneId>,
    #[serde(default)]
    pub predecessors: Vec<LaneId>,
}

/// Maneuver a junction connector performs, derived from its geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NavCommand {
    FollowLane,
    GoStraight,
    TurnLeft,
    TurnRight,
}

impl NavCommand {
    pub fn describe(&self) -> &'static str {
        match self {
            NavCommand::FollowLane => "follow the lane",
            NavCommand::GoStraight => "go straight at the junction",
            NavCommand::TurnLeft => "turn left at the junction",
            NavCommand::TurnRight => "turn right at the junction",
        }
    }
}

impl Lane {
    pub fn neighbor(&self, left: bool) -> Option<&LaneId> {
        if left {
            self.left_neighbor.as_ref()
        } else {
            self.right_neighbor.as_ref()
        }
    }

    pub fn marking(&self, left: bool) -> Marking {
        if left {
            self.left_marking
        } else {
            self.right_marking
        }
    }

    /// Turn class of a lane from the heading change between its ends.
    pub fn maneuver(&self) -> NavCommand {
        let pts = self.centerline.points();
        if pts.len() < 2 {
            return NavCommand::GoStraight;
        }
        let h0 = pts[1].sub(pts[0]).heading();
        let n = pts.len();
        let h1 = pts[n - 1].sub(pts[n - 2]).heading();
        let delta = wrap_angle(h1 - h0);
        let threshold = std::f64::consts::FRAC_PI_6;
        if delta > threshold {
            NavCommand::TurnRight
        } else if delta < -threshold {
            NavCommand::TurnLeft
        } else {
            NavCommand::GoStraight
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: String,
    pub lanes: Vec<LaneId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LaneGraph {
    pub lanes: Vec<Lane>,
    pub junctions: Vec<Junction>,
}

impl LaneGraph {
    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActorKind {
    Vehicle,
    Bicycle,
    Pedestrian,
    StaticObstacle,
}

impl ActorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActorKind::Vehicle => "vehicle",
            ActorKind::Bicycle => "bicycle",
            ActorKind::Pedestrian => "pedestrian",
            ActorKind::StaticObstacle => "static obstacle",
        }
    }

    /// Road users that can move on their own.
    pub fn is_road_user(&self) -> bool {
        !matches!(self, ActorKind::StaticObstacle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub length: f64,
    pub width: f64,
}

/// Scripted motion of a background actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Motion {
    Static,
    /// Straight line along the current heading at constant speed.
    Constant,
    /// Follows `path` at constant speed; `s` is the current arc position.
    Path { path: Polyline, s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub kind: ActorKind,
    pub pose: Pose,
    pub speed: f64,
    pub bbox: BBox,
    pub color: String,
    pub name: String,
    pub is_role: bool,
    pub lidar_point_proxy: u32,
    #[serde(default)]
    pub emergency: bool,
    pub motion: Motion,
}

impl Actor {
    pub fn footprint(&self) -> Obb {
        Obb::new(self.pose, self.bbox.length, self.bbox.width)
    }

    /// Label used when referencing this actor in text, e.g. `<lead>`.
    pub fn tag(&self) -> String {
        format!("<{}>", self.id)
    }

    pub fn velocity(&self) -> Point {
        Point::unit(self.pose.heading).scale(self.speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlKind {
    TrafficLight,
    StopSign,
    SpeedLimitSign,
    YieldSign,
    ConstructionWarning,
    ConstructionCone,
}

impl ControlKind {
    pub fn describe(&self) -> &'static str {
        match self {
            ControlKind::TrafficLight => "traffic light",
            ControlKind::StopSign => "stop sign",
            ControlKind::SpeedLimitSign => "speed limit sign",
            ControlKind::YieldSign => "yield sign",
            ControlKind::ConstructionWarning => "construction warning sign",
            ControlKind::ConstructionCone => "construction cone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LightState {
    Red,
    Yellow,
    Green,
}

impl LightState {
    pub fn as_str(&self) -> &'static str {
        match self {
            LightState::Red => "red",
            LightState::Yellow => "yellow",
            LightState::Green => "green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPhase {
    /// Seconds remaining in the current state.
    pub timer: f64,
    pub red: f64,
    pub yellow: f64,
    pub green: f64,
}

impl LightPhase {
    pub fn duration(&self, state: LightState) -> f64 {
        match state {
            LightState::Red => self.red,
            LightState::Yellow => self.yellow,
            LightState::Green => self.green,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficControl {
    pub id: String,
    pub kind: ControlKind,
    pub pose: Pose,
    pub state: Option<LightState>,
    /// Speed value in m/s, speed-limit signs only.
    pub value: Option<f64>,
    pub affects_ego: bool,
    /// Lane whose traffic this control governs.
    pub lane: Option<LaneId>,
    /// Stop line (or sign position) projected onto the governed lane.
    pub stop_point: Option<Point>,
    pub phase: Option<LightPhase>,
}

impl TrafficControl {
    pub fn tag(&self) -> String {
        format!("<{}>", self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeOfDay {
    Day,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeatherCondition {
    Clear,
    Rain,
    Fog,
    Flooded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeatherState {
    pub time_of_day: TimeOfDay,
    pub condition: WeatherCondition,
    pub in_tunnel: bool,
}

impl Default for WeatherState {
    fn default() -> Self {
        Self {
            time_of_day: TimeOfDay::Day,
            condition: WeatherCondition::Clear,
            in_tunnel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose,
    pub speed: f64,
    pub bbox: BBox,
    pub current_lane: Option<LaneId>,
    pub lateral_offset: Option<f64>,
    /// Route as a waypoint polyline through `route_lanes`.
    pub route: Polyline,
    pub route_lanes: Vec<LaneId>,
    pub route_progress: f64,
    pub command: NavCommand,
    pub remembered_speed_limit: Option<f64>,
    /// Seconds spent standing still in front of each stop sign.
    #[serde(default)]
    pub stop_dwell: BTreeMap<String, f64>,
    #[serde(default)]
    pub cleared_stops: BTreeSet<String>,
}

impl EgoState {
    pub fn footprint(&self) -> Obb {
        Obb::new(self.pose, self.bbox.length, self.bbox.width)
    }

    pub fn front(&self) -> Point {
        self.pose.position().add(self.pose.forward().scale(self.bbox.length / 2.0))
    }
}

/// Axis-aligned region, used for tunnels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub min: Point,
    pub max: Point,
}

impl Zone {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleDeclaration {
    pub actor_id: ActorId,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub role_actors: Vec<RoleDeclaration>,
    #[serde(default)]
    pub tunnels: Vec<Zone>,
    pub tick_budget: u64,
    pub default_speed_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrailAnchor {
    pub frame_index: u64,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub frame_index: u64,
    pub ego: EgoState,
    pub actors: Vec<Actor>,
    pub controls: Vec<TrafficControl>,
    pub lane_graph: LaneGraph,
    pub weather: WeatherState,
    pub scenario_meta: ScenarioMeta,
    /// Positions recorded every [`TRAIL_INTERVAL_TICKS`] ticks, oldest first.
    #[serde(default)]
    pub trails: BTreeMap<ActorId, Vec<TrailAnchor>>,
}

impl WorldState {
    pub fn actor(&self, id: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn control(&self, id: &str) -> Option<&TrafficControl> {
        self.controls.iter().find(|c| c.id == id)
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lane_graph.lane(id)
    }

    pub fn time(&self) -> f64 {
        self.frame_index as f64 * DEFAULT_DT
    }
}
