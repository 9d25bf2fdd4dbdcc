//! Scenario documents (TOML, schema version 1) and the bundled scenario set.
//!
//! See `docs/scenario-format.md` for the field reference.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{Point, Polyline, Pose};

use super::{
    sim, Actor, ActorKind, BBox, ControlKind, DirectionFlag, EgoState, Junction, Lane, LaneGraph,
    LightPhase, LightState, Marking, Motion, NavCommand, RoleDeclaration, ScenarioMeta,
    TimeOfDay, TrafficControl, WeatherCondition, WeatherState, WorldState, Zone,
};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

pub const BUNDLED_SCENARIO_NAMES: [&str; 5] = [
    "FollowLeadVehicle",
    "ObstacleAhead",
    "RedLightJunctionTurn",
    "StopSignSpeedLimit",
    "InvadingTurn",
];

const BUNDLED: [(&str, &str); 5] = [
    ("FollowLeadVehicle", include_str!("../../scenarios/follow_lead_vehicle.toml")),
    ("ObstacleAhead", include_str!("../../scenarios/obstacle_ahead.toml")),
    ("RedLightJunctionTurn", include_str!("../../scenarios/red_light_junction_turn.toml")),
    ("StopSignSpeedLimit", include_str!("../../scenarios/stop_sign_speed_limit.toml")),
    ("InvadingTurn", include_str!("../../scenarios/invading_turn.toml")),
];

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {field}: {message}")]
    Validation { field: String, message: String },
    #[error("unknown bundled scenario {name:?}; available: {available}")]
    UnknownBundled { name: String, available: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

pub fn bundled_scenario(name: &str, seed: u64) -> Result<WorldState, ScenarioError> {
    let doc = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| *d)
        .ok_or_else(|| ScenarioError::UnknownBundled {
            name: name.to_string(),
            available: BUNDLED_SCENARIO_NAMES.join(", "),
        })?;
    load_scenario(doc, seed)
}

pub fn bundled_scenarios(seed: u64) -> Vec<WorldState> {
    BUNDLED_SCENARIO_NAMES
        .iter()
        .map(|n| bundled_scenario(n, seed).expect("bundled scenarios are valid"))
        .collect()
}

/// Source text of a bundled scenario document.
pub fn bundled_scenario_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, d)| *d)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    version: u32,
    name: String,
    #[serde(default = "default_budget")]
    tick_budget: u64,
    #[serde(default)]
    default_speed_limit_kmh: Option<f64>,
    #[serde(default)]
    spawn_jitter: f64,
    #[serde(default)]
    weather: RawWeather,
    #[serde(default, rename = "tunnel")]
    tunnels: Vec<RawZone>,
    #[serde(rename = "lane")]
    lanes: Vec<RawLane>,
    #[serde(default, rename = "junction")]
    junctions: Vec<Junction>,
    ego: RawEgo,
    #[serde(default, rename = "actor")]
    actors: Vec<RawActor>,
    #[serde(default, rename = "control")]
    controls: Vec<RawControl>,
    #[serde(default, rename = "role")]
    roles: Vec<RoleDeclaration>,
}

fn default_budget() -> u64 {
    1200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeather {
    time_of_day: TimeOfDay,
    condition: WeatherCondition,
}

impl Default for RawWeather {
    fn default() -> Self {
        Self {
            time_of_day: TimeOfDay::Day,
            condition: WeatherCondition::Clear,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawZone {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLane {
    id: String,
    centerline: Vec<[f64; 2]>,
    #[serde(default = "default_lane_width")]
    width: f64,
    #[serde(default = "default_direction")]
    direction: DirectionFlag,
    left_neighbor: Option<String>,
    right_neighbor: Option<String>,
    #[serde(default)]
    left_marking: Marking,
    #[serde(default)]
    right_marking: Marking,
    speed_limit_kmh: Option<f64>,
    #[serde(default)]
    in_junction: bool,
    #[serde(default)]
    successors: Vec<String>,
}

fn default_lane_width() -> f64 {
    3.5
}

fn default_direction() -> DirectionFlag {
    DirectionFlag::SameDirection
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEgo {
    lane: Option<String>,
    #[serde(default)]
    s: f64,
    #[serde(default)]
    lateral: f64,
    #[serde(default)]
    heading_offset_deg: f64,
    pose: Option<[f64; 3]>,
    #[serde(default)]
    speed: f64,
    route: Vec<String>,
    #[serde(default = "default_ego_length")]
    length: f64,
    #[serde(default = "default_ego_width")]
    width: f64,
}

fn default_actor_size(kind: ActorKind) -> (f64, f64) {
    match kind {
        ActorKind::Vehicle => (4.6, 1.9),
        ActorKind::Bicycle => (1.8, 0.6),
        ActorKind::Pedestrian => (0.6, 0.6),
        ActorKind::StaticObstacle => (1.0, 1.0),
    }
}

fn default_ego_length() -> f64 {
    4.8
}

fn default_ego_width() -> f64 {
    2.0
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum RawMotion {
    Static,
    Constant,
    Lane,
    Path,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActor {
    id: String,
    kind: ActorKind,
    lane: Option<String>,
    #[serde(default)]
    s: f64,
    #[serde(default)]
    lateral: f64,
    /// `[x, y, heading_deg]`
    pose: Option<[f64; 3]>,
    #[serde(default)]
    speed: f64,
    length: Option<f64>,
    width: Option<f64>,
    #[serde(default = "default_color")]
    color: String,
    name: Option<String>,
    #[serde(default = "default_lidar")]
    lidar_points: u32,
    #[serde(default)]
    emergency: bool,
    motion: Option<RawMotion>,
    path: Option<Vec<[f64; 2]>>,
}

fn default_color() -> String {
    "gray".to_string()
}

fn default_lidar() -> u32 {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    id: String,
    kind: ControlKind,
    lane: Option<String>,
    s: Option<f64>,
    pose: Option<[f64; 3]>,
    state: Option<LightState>,
    timer: Option<f64>,
    red: Option<f64>,
    yellow: Option<f64>,
    green: Option<f64>,
    value_kmh: Option<f64>,
    #[serde(default = "default_true")]
    affects_ego: bool,
}

fn default_true() -> bool {
    true
}

/// Parses and validates a scenario document, returning the frame-0 world.
pub fn load_scenario(document: &str, seed: u64) -> Result<WorldState, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(document).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if raw.version != SCENARIO_FORMAT_VERSION {
        return Err(invalid(
            "version",
            format!("unsupported version {}, expected {SCENARIO_FORMAT_VERSION}", raw.version),
        ));
    }
    let lane_graph = build_lane_graph(&raw.lanes, &raw.junctions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let lane = |field: &str, id: &str| {
        lane_graph
            .lane(id)
            .ok_or_else(|| invalid(field, format!("dangling lane reference {id:?}")))
    };

    // route
    if raw.ego.route.is_empty() {
        return Err(invalid("ego.route", "route must name at least one lane"));
    }
    let mut route = Polyline::new(Vec::new());
    for (i, id) in raw.ego.route.iter().enumerate() {
        let l = lane(&format!("ego.route[{i}]"), id)?;
        if i > 0 && !lane_graph.lane(&raw.ego.route[i - 1]).unwrap().successors.contains(id) {
            return Err(invalid(
                format!("ego.route[{i}]"),
                format!("lane {id:?} does not succeed {:?}", raw.ego.route[i - 1]),
            ));
        }
        route.extend(l.centerline.points());
    }

    let ego_pose = match (&raw.ego.pose, &raw.ego.lane) {
        (Some(p), _) => Pose::new(p[0], p[1], p[2].to_radians()),
        (None, Some(id)) => {
            let l = lane("ego.lane", id)?;
            lane_pose(l, raw.ego.s, raw.ego.lateral, raw.ego.heading_offset_deg.to_radians())
        }
        (None, None) => return Err(invalid("ego", "either pose or lane must be given")),
    };
    if raw.ego.speed < 0.0 {
        return Err(invalid("ego.speed", "must be non-negative"));
    }

    // actors
    let mut seen = HashSet::new();
    let mut actors = Vec::with_capacity(raw.actors.len());
    for (i, ra) in raw.actors.iter().enumerate() {
        let field = format!("actor[{i}]");
        if !seen.insert(ra.id.clone()) {
            return Err(invalid(format!("{field}.id"), format!("duplicate actor id {:?}", ra.id)));
        }
        if ra.speed < 0.0 {
            return Err(invalid(format!("{field}.speed"), "must be non-negative"));
        }
        let (def_len, def_wid) = default_actor_size(ra.kind);
        let (length, width) = (ra.length.unwrap_or(def_len), ra.width.unwrap_or(def_wid));
        if length <= 0.0 || width <= 0.0 {
            return Err(invalid(format!("{field}.length"), "bbox dimensions must be positive"));
        }
        let jitter = if raw.spawn_jitter > 0.0 {
            rng.gen_range(-raw.spawn_jitter..=raw.spawn_jitter)
        } else {
            0.0
        };
        let (pose, lane_ref) = match (&ra.pose, &ra.lane) {
            (Some(p), _) => (Pose::new(p[0], p[1], p[2].to_radians()), None),
            (None, Some(id)) => {
                let l = lane(&format!("{field}.lane"), id)?;
                (lane_pose(l, ra.s + jitter, ra.lateral, 0.0), Some(l))
            }
            (None, None) => {
                return Err(invalid(field, "either pose or lane must be given"));
            }
        };
        let default_motion = if ra.speed > 0.0 { RawMotion::Constant } else { RawMotion::Static };
        let motion = match ra.motion.unwrap_or(default_motion) {
            RawMotion::Static => Motion::Static,
            RawMotion::Constant => Motion::Constant,
            RawMotion::Lane => {
                let l = lane_ref.ok_or_else(|| {
                    invalid(format!("{field}.motion"), "lane motion requires a lane")
                })?;
                let path = l.centerline.offset(ra.lateral);
                Motion::Path { path, s: ra.s + jitter }
            }
            RawMotion::Path => {
                let pts = ra.path.as_ref().ok_or_else(|| {
                    invalid(format!("{field}.path"), "path motion requires a path")
                })?;
                let path = validated_polyline(&format!("{field}.path"), pts)?;
                Motion::Path { path, s: 0.0 }
            }
        };
        let pose = match &motion {
            Motion::Path { path, s } => Pose::new(
                path.point_at(*s).x,
                path.point_at(*s).y,
                path.heading_at(*s),
            ),
            _ => pose,
        };
        actors.push(Actor {
            id: ra.id.clone(),
            kind: ra.kind,
            pose,
            speed: ra.speed,
            bbox: BBox { length, width },
            color: ra.color.clone(),
            name: ra.name.clone().unwrap_or_else(|| ra.kind.as_str().to_string()),
            is_role: false,
            lidar_point_proxy: ra.lidar_points,
            emergency: ra.emergency,
            motion,
        });
    }
    for (i, role) in raw.roles.iter().enumerate() {
        let actor = actors.iter_mut().find(|a| a.id == role.actor_id).ok_or_else(|| {
            invalid(format!("role[{i}].actor_id"), format!("unknown actor {:?}", role.actor_id))
        })?;
        actor.is_role = true;
    }

    // controls
    let mut controls = Vec::with_capacity(raw.controls.len());
    let mut seen = HashSet::new();
    for (i, rc) in raw.controls.iter().enumerate() {
        let field = format!("control[{i}]");
        if !seen.insert(rc.id.clone()) {
            return Err(invalid(format!("{field}.id"), format!("duplicate control id {:?}", rc.id)));
        }
        let is_light = rc.kind == ControlKind::TrafficLight;
        let is_limit = rc.kind == ControlKind::SpeedLimitSign;
        if is_light != rc.state.is_some() {
            return Err(invalid(
                format!("{field}.state"),
                "state is required for traffic lights and forbidden otherwise",
            ));
        }
        if is_limit != rc.value_kmh.is_some() {
            return Err(invalid(
                format!("{field}.value_kmh"),
                "value is required for speed-limit signs and forbidden otherwise",
            ));
        }
        if rc.value_kmh.is_some_and(|v| v <= 0.0) {
            return Err(invalid(format!("{field}.value_kmh"), "must be positive"));
        }
        let governed = match &rc.lane {
            Some(id) => Some(lane(&format!("{field}.lane"), id)?),
            None => None,
        };
        let (pose, stop_point) = match (&rc.pose, governed, rc.s) {
            (Some(p), g, _) => {
                let pose = Pose::new(p[0], p[1], p[2].to_radians());
                let stop = g.and_then(|l| l.centerline.project(pose.position())).map(|pr| pr.point);
                (pose, stop)
            }
            (None, Some(l), Some(s)) => {
                let stop = l.centerline.point_at(s);
                let side = lane_pose(l, s, l.width / 2.0 + 1.0, 0.0);
                (side, Some(stop))
            }
            _ => {
                return Err(invalid(field, "either pose or lane + s must be given"));
            }
        };
        let phase = if is_light {
            let red = rc.red.unwrap_or(10.0);
            let yellow = rc.yellow.unwrap_or(3.0);
            let green = rc.green.unwrap_or(30.0);
            if red <= 0.0 || yellow <= 0.0 || green <= 0.0 {
                return Err(invalid(format!("{field}.red"), "phase durations must be positive"));
            }
            let mut phase = LightPhase { timer: 0.0, red, yellow, green };
            phase.timer = rc.timer.unwrap_or_else(|| phase.duration(rc.state.unwrap()));
            Some(phase)
        } else {
            None
        };
        controls.push(TrafficControl {
            id: rc.id.clone(),
            kind: rc.kind,
            pose,
            state: rc.state,
            value: rc.value_kmh.map(|v| v / 3.6),
            affects_ego: rc.affects_ego,
            lane: rc.lane.clone(),
            stop_point,
            phase,
        });
    }

    let scenario_meta = ScenarioMeta {
        name: raw.name.clone(),
        role_actors: raw.roles.clone(),
        tunnels: raw
            .tunnels
            .iter()
            .map(|z| Zone { min: z.min.into(), max: z.max.into() })
            .collect(),
        tick_budget: raw.tick_budget,
        default_speed_limit: raw.default_speed_limit_kmh.unwrap_or(50.0) / 3.6,
    };

    let ego = EgoState {
        pose: ego_pose,
        speed: raw.ego.speed,
        bbox: BBox { length: raw.ego.length, width: raw.ego.width },
        current_lane: None,
        lateral_offset: None,
        route,
        route_lanes: raw.ego.route.clone(),
        route_progress: 0.0,
        command: NavCommand::FollowLane,
        remembered_speed_limit: None,
        stop_dwell: BTreeMap::new(),
        cleared_stops: BTreeSet::new(),
    };

    let mut world = WorldState {
        frame_index: 0,
        ego,
        actors,
        controls,
        lane_graph,
        weather: WeatherState {
            time_of_day: raw.weather.time_of_day,
            condition: raw.weather.condition,
            in_tunnel: false,
        },
        scenario_meta,
        trails: BTreeMap::new(),
    };
    let progress = world
        .route_projection(world.ego.pose.position())
        .map(|p| p.s)
        .unwrap_or(0.0);
    world.ego.route_progress = progress;
    sim::refresh_derived(&mut world);
    sim::record_trails(&mut world);
    Ok(world)
}

fn lane_pose(lane: &Lane, s: f64, lateral: f64, heading_offset: f64) -> Pose {
    let h = lane.centerline.heading_at(s);
    let p = lane.centerline.point_at(s).add(Point::right_of(h).scale(lateral));
    Pose::new(p.x, p.y, h + heading_offset)
}

fn validated_polyline(field: &str, pts: &[[f64; 2]]) -> Result<Polyline, ScenarioError> {
    if pts.len() < 2 {
        return Err(invalid(field, "polyline needs at least 2 points"));
    }
    for w in pts.windows(2) {
        let d = Point::from(w[0]).dist(Point::from(w[1]));
        if !(d > 0.0) {
            return Err(invalid(field, "polyline segments must have positive length"));
        }
    }
    Ok(Polyline::new(pts.iter().map(|p| Point::from(*p)).collect()))
}

fn build_lane_graph(raw: &[RawLane], junctions: &[Junction]) -> Result<LaneGraph, ScenarioError> {
    let ids: HashSet<&str> = raw.iter().map(|l| l.id.as_str()).collect();
    if ids.len() != raw.len() {
        return Err(invalid("lane", "lane ids must be unique"));
    }
    let junction_lanes: HashSet<&str> =
        junctions.iter().flat_map(|j| j.lanes.iter().map(String::as_str)).collect();
    for (ji, j) in junctions.iter().enumerate() {
        for id in &j.lanes {
            if !ids.contains(id.as_str()) {
                return Err(invalid(
                    format!("junction[{ji}].lanes"),
                    format!("dangling lane reference {id:?}"),
                ));
            }
        }
    }
    let mut lanes = Vec::with_capacity(raw.len());
    for (i, rl) in raw.iter().enumerate() {
        let field = format!("lane[{i}]");
        let centerline = validated_polyline(&format!("{field}.centerline"), &rl.centerline)?;
        if !(rl.width > 0.0) {
            return Err(invalid(format!("{field}.width"), "must be positive"));
        }
        if rl.speed_limit_kmh.is_some_and(|v| !(v > 0.0)) {
            return Err(invalid(format!("{field}.speed_limit_kmh"), "must be positive"));
        }
        for (name, r) in [("left_neighbor", &rl.left_neighbor), ("right_neighbor", &rl.right_neighbor)] {
            if let Some(n) = r {
                if !ids.contains(n.as_str()) {
                    return Err(invalid(format!("{field}.{name}"), format!("dangling lane reference {n:?}")));
                }
            }
        }
        for s in &rl.successors {
            if !ids.contains(s.as_str()) {
                return Err(invalid(format!("{field}.successors"), format!("dangling lane reference {s:?}")));
            }
        }
        lanes.push(Lane {
            id: rl.id.clone(),
            centerline,
            width: rl.width,
            direction_flag: rl.direction,
            left_neighbor: rl.left_neighbor.clone(),
            right_neighbor: rl.right_neighbor.clone(),
            left_marking: rl.left_marking,
            right_marking: rl.right_marking,
            speed_limit: rl.speed_limit_kmh.map(|v| v / 3.6),
            in_junction: rl.in_junction || junction_lanes.contains(rl.id.as_str()),
            successors: rl.successors.clone(),
            predecessors: Vec::new(),
        });
    }
    let preds: Vec<(String, String)> = lanes
        .iter()
        .flat_map(|l| l.successors.iter().map(move |s| (s.clone(), l.id.clone())))
        .collect();
    for (succ, pred) in preds {
        let lane = lanes.iter_mut().find(|l| l.id == succ).unwrap();
        if !lane.predecessors.contains(&pred) {
            lane.predecessors.push(pred);
        }
    }
    let graph = LaneGraph { lanes, junctions: junctions.to_vec() };
    check_neighbor_symmetry(&graph)?;
    Ok(graph)
}

/// A left link from `a` to `b` must be mirrored: as a right link when both run
/// the same way, as a left link when they run opposite ways.
fn check_neighbor_symmetry(graph: &LaneGraph) -> Result<(), ScenarioError> {
    for lane in &graph.lanes {
        for left in [true, false] {
            let Some(nid) = lane.neighbor(left) else { continue };
            let other = graph.lane(nid).unwrap();
            let same = other.direction_flag == lane.direction_flag;
            let back = if same { other.neighbor(!left) } else { other.neighbor(left) };
            if back != Some(&lane.id) {
                let side = if left { "left_neighbor" } else { "right_neighbor" };
                return Err(invalid(
                    format!("lane {:?}.{side}", lane.id),
                    format!("neighbor link to {nid:?} is not mirrored"),
                ));
            }
        }
    }
    Ok(())
}
