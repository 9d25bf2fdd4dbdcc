//! Turns action keys into a waypoint plan and low-level vehicle commands.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point, Polyline};
use crate::keys::{ActionKeys, DirectionKey, SpeedKey};
use crate::world::{EgoState, NavCommand, VehicleControl, VehicleParams, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionConfig {
    /// Speed change per ACCELERATE or DECELERATE, m/s.
    pub speed_step: f64,
    pub lane_change_blend: f64,
    pub deviate_offset: f64,
    pub lookahead: f64,
    pub plan_length: f64,
    pub waypoint_spacing: f64,
    pub throttle_gain: f64,
    pub brake_gain: f64,
    pub deadband: f64,
    pub uturn_radius: f64,
    /// A junction connector starting within this distance takes junction keys.
    pub junction_reach: f64,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            speed_step: 2.0,
            lane_change_blend: 15.0,
            deviate_offset: 0.8,
            lookahead: 6.0,
            plan_length: 40.0,
            waypoint_spacing: 1.0,
            throttle_gain: 0.5,
            brake_gain: 0.25,
            deadband: 0.02,
            uturn_radius: 5.0,
            junction_reach: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub waypoints: Vec<Point>,
    /// m/s
    pub target_speed: f64,
}

/// A plan plus what was actually applied when a key could not be honored.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: WaypointPlan,
    pub applied: DirectionKey,
    pub warning: Option<String>,
}

/// Missing direction continues along the route, missing speed keeps speed.
pub fn resolve_defaults(keys: ActionKeys, world: &WorldState) -> (DirectionKey, SpeedKey) {
    let direction = keys.direction.unwrap_or_else(|| {
        if world.ego_at_junction() {
            match world.ego.command {
                NavCommand::TurnLeft => DirectionKey::TurnLeft,
                NavCommand::TurnRight => DirectionKey::TurnRight,
                _ => DirectionKey::GoStraight,
            }
        } else {
            DirectionKey::FollowLane
        }
    });
    (direction, keys.speed.unwrap_or(SpeedKey::Keep))
}

pub fn target_speed(speed: SpeedKey, world: &WorldState, cfg: &ActionConfig) -> f64 {
    let v = world.ego.speed;
    match speed {
        SpeedKey::Keep => v,
        SpeedKey::Accelerate => (v + cfg.speed_step).min(world.effective_speed_limit()),
        SpeedKey::Decelerate => (v - cfg.speed_step).max(0.0),
        SpeedKey::Stop => 0.0,
    }
}

/// The path FOLLOW_LANE tracks and the ego arc length on it: the route while
/// the ego is on a route lane or off any lane, else its current lane.
fn base_path(world: &WorldState) -> (Polyline, f64) {
    let ego = &world.ego;
    let pos = ego.pose.position();
    if let Some(lane) = ego
        .current_lane
        .as_deref()
        .filter(|id| !ego.route_lanes.iter().any(|r| r == id))
        .and_then(|id| world.lane(id))
    {
        let path = aligned(&lane.centerline, pos, ego.pose.heading);
        if let Some(p) = path.project(pos) {
            return (path, p.s);
        }
    }
    (ego.route.clone(), ego.route_progress)
}

fn aligned(line: &Polyline, pos: Point, heading: f64) -> Polyline {
    match line.project(pos) {
        Some(p) if wrap_angle(p.heading - heading).abs() > std::f64::consts::FRAC_PI_2 => line.reversed(),
        _ => line.clone(),
    }
}

fn junction_path(world: &WorldState, key: DirectionKey, cfg: &ActionConfig) -> Option<Polyline> {
    let want = match key {
        DirectionKey::TurnLeft => NavCommand::TurnLeft,
        DirectionKey::TurnRight => NavCommand::TurnRight,
        _ => NavCommand::GoStraight,
    };
    let pos = world.ego.pose.position();
    let front = world.ego_front_s();
    let inside: Vec<_> = world
        .containing_lanes(pos)
        .into_iter()
        .filter_map(|c| world.lane(&c.lane_id).filter(|l| l.in_junction))
        .collect();
    let upcoming = world
        .next_junction_span()
        .filter(|sp| sp.start - front <= cfg.junction_reach);
    if inside.is_empty() && upcoming.is_none() {
        return None;
    }
    // the route already makes this maneuver
    let route_lane = inside
        .iter()
        .find(|l| world.ego.route_lanes.contains(&l.id))
        .map(|l| l.id.clone())
        .or_else(|| upcoming.as_ref().map(|sp| sp.lane_id.clone()));
    if let Some(lane) = route_lane.as_deref().and_then(|id| world.lane(id)) {
        if lane.maneuver() == want {
            let s = world.ego.route_progress;
            return Some(world.ego.route.slice((s - 2.0).max(0.0), s + cfg.plan_length + 20.0));
        }
    }
    // another connector leaving the same approach lane
    let approach: Vec<String> = match (inside.first(), route_lane.as_deref().and_then(|id| world.lane(id))) {
        (Some(l), _) => l.predecessors.clone(),
        (None, Some(l)) => l.predecessors.clone(),
        _ => Vec::new(),
    };
    let connector = world
        .lane_graph
        .lanes
        .iter()
        .filter(|l| l.in_junction && l.maneuver() == want && l.predecessors.iter().any(|p| approach.contains(p)))
        .min_by(|a, b| a.id.cmp(&b.id))?;
    let mut path = Polyline::new(vec![pos]);
    let start = connector.centerline.project(pos).map(|p| p.s).unwrap_or(0.0);
    path.extend(&connector.centerline.slice(start, connector.centerline.length()).points()[..]);
    if let Some(next) = connector.successors.first().and_then(|id| world.lane(id)) {
        path.extend(next.centerline.points());
    }
    Some(path)
}

/// Semicircle toward `left`, then straight on.
fn uturn_path(world: &WorldState, left: bool, cfg: &ActionConfig) -> Polyline {
    let pose = world.ego.pose;
    let side = if left { -1.0 } else { 1.0 };
    let normal = Point::right_of(pose.heading).scale(side);
    let center = pose.position().add(normal.scale(cfg.uturn_radius));
    let steps = 18;
    let mut pts = Vec::with_capacity(steps + 2);
    for i in 0..=steps {
        let a = std::f64::consts::PI * i as f64 / steps as f64;
        // rotate the center-to-ego vector by `a` in the turning direction
        let r = pose.position().sub(center);
        let (s, c) = (side * a).sin_cos();
        pts.push(center.add(Point::new(r.x * c - r.y * s, r.x * s + r.y * c)));
    }
    let end_dir = Point::unit(pose.heading + std::f64::consts::PI);
    let last = *pts.last().unwrap();
    pts.push(last.add(end_dir.scale(cfg.plan_length)));
    Polyline::new(pts)
}

/// Target lane for a lane change: the lane one lane width to the given side.
fn lane_change_target(world: &WorldState, left: bool) -> Option<Polyline> {
    let ego = &world.ego;
    let pos = ego.pose.position();
    let current = ego.current_lane.as_deref();
    let width = current.and_then(|id| world.lane(id)).map(|l| l.width).unwrap_or(3.5);
    let side = if left { -1.0 } else { 1.0 };
    let probe = pos.add(Point::right_of(ego.pose.heading).scale(side * width));
    let geometric = world
        .containing_lanes(probe)
        .into_iter()
        .filter(|c| Some(c.lane_id.as_str()) != current)
        .find_map(|c| world.lane(&c.lane_id).filter(|l| !l.in_junction));
    let lane = geometric.or_else(|| {
        let cur = world.lane(current?)?;
        let cur_aligned = cur
            .centerline
            .project(pos)
            .is_some_and(|p| wrap_angle(p.heading - ego.pose.heading).abs() <= std::f64::consts::FRAC_PI_2);
        // a reversed lane has its sides swapped
        world.lane(cur.neighbor(left == cur_aligned)?)
    })?;
    Some(aligned(&lane.centerline, pos, ego.pose.heading))
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

pub fn plan_waypoints(
    direction: DirectionKey,
    speed: SpeedKey,
    world: &WorldState,
    cfg: &ActionConfig,
) -> PlanOutcome {
    let target = target_speed(speed, world, cfg);
    let (base, s) = base_path(world);
    let follow = |base: &Polyline, s: f64| base.sample((s - 1.0).max(0.0), s + cfg.plan_length, cfg.waypoint_spacing);
    let mut warning = None;
    let mut applied = direction;
    let waypoints = match direction {
        DirectionKey::FollowLane => follow(&base, s),
        DirectionKey::DeviateLeft | DirectionKey::DeviateRight => {
            let off = if direction == DirectionKey::DeviateLeft { -cfg.deviate_offset } else { cfg.deviate_offset };
            let shifted = base.offset(off);
            let s = shifted.project(world.ego.pose.position()).map(|p| p.s).unwrap_or(s);
            follow(&shifted, s)
        }
        DirectionKey::ChangeLaneLeft | DirectionKey::ChangeLaneRight => {
            let left = direction == DirectionKey::ChangeLaneLeft;
            match lane_change_target(world, left) {
                Some(lane) => {
                    let p = lane.project(world.ego.pose.position()).expect("target lane has points");
                    let d0 = p.lateral;
                    (0..)
                        .map(|i| i as f64 * cfg.waypoint_spacing)
                        .take_while(|ds| *ds <= cfg.plan_length + 1e-9)
                        .map(|ds| {
                            let sl = p.s + ds;
                            let keep = d0 * (1.0 - smoothstep(ds / cfg.lane_change_blend));
                            lane.point_at(sl).add(Point::right_of(lane.heading_at(sl)).scale(keep))
                        })
                        .collect()
                }
                None => {
                    warning = Some(format!("{direction}: no lane on that side, following the current lane"));
                    applied = DirectionKey::FollowLane;
                    follow(&base, s)
                }
            }
        }
        DirectionKey::GoStraight | DirectionKey::TurnLeft | DirectionKey::TurnRight => {
            match junction_path(world, direction, cfg) {
                Some(path) => {
                    let s = path.project(world.ego.pose.position()).map(|p| p.s).unwrap_or(0.0);
                    follow(&path, s)
                }
                None if direction != DirectionKey::GoStraight => {
                    let path = uturn_path(world, direction == DirectionKey::TurnLeft, cfg);
                    path.sample(0.0, path.length(), cfg.waypoint_spacing)
                }
                None => {
                    warning = Some("GO_STRAIGHT away from a junction, following the current lane".into());
                    applied = DirectionKey::FollowLane;
                    follow(&base, s)
                }
            }
        }
    };
    PlanOutcome {
        plan: WaypointPlan { waypoints, target_speed: target },
        applied,
        warning,
    }
}

/// Pure pursuit on the plan plus a proportional speed loop.
pub fn control(plan: &WaypointPlan, ego: &EgoState, dt: f64, cfg: &ActionConfig, params: &VehicleParams) -> VehicleControl {
    let mut steer = 0.0;
    if plan.waypoints.len() >= 2 {
        let path = Polyline::new(plan.waypoints.clone());
        let pos = ego.pose.position();
        let s = path.project(pos).map(|p| p.s).unwrap_or(0.0);
        let goal = path.point_at(s + cfg.lookahead);
        let rear = pos.sub(ego.pose.forward().scale(params.wheelbase / 2.0));
        let rel = goal.sub(rear);
        let ld = rel.norm();
        if ld > 1e-6 {
            let alpha = wrap_angle(rel.heading() - ego.pose.heading);
            let delta = (2.0 * params.wheelbase * alpha.sin() / ld).atan();
            steer = (delta / params.max_steer).clamp(-1.0, 1.0);
        }
    }
    if steer.abs() < cfg.deadband {
        steer = 0.0;
    }
    let err = plan.target_speed - ego.speed;
    let (mut throttle, mut brake) = (0.0, 0.0);
    if plan.target_speed <= 0.0 {
        brake = 1.0;
    } else if err > cfg.deadband {
        // never overshoot the target within one tick
        throttle = (cfg.throttle_gain * err).min(err / (params.max_accel * dt));
    } else if err < -cfg.deadband {
        brake = (cfg.brake_gain * -err).min(-err / (params.max_brake * dt));
    }
    VehicleControl { steer, throttle, brake }.clamped()
}

/// Per-episode controller state: the last plan and keys between interventions.
#[derive(Debug, Clone, Default)]
pub struct ActionModule {
    pub config: ActionConfig,
    pub params: VehicleParams,
    last_plan: Option<WaypointPlan>,
    last_keys: Option<(DirectionKey, SpeedKey)>,
    pub warnings: Vec<String>,
}

impl ActionModule {
    pub fn new(config: ActionConfig, params: VehicleParams) -> Self {
        Self { config, params, ..Default::default() }
    }

    /// New keys from the policy; returns the keys actually applied.
    pub fn intervene(&mut self, keys: ActionKeys, world: &WorldState) -> (DirectionKey, SpeedKey) {
        let (direction, speed) = resolve_defaults(keys, world);
        let out = plan_waypoints(direction, speed, world, &self.config);
        if let Some(w) = out.warning {
            log::warn!("frame {}: {w}", world.frame_index);
            self.warnings.push(format!("frame {}: {w}", world.frame_index));
        }
        self.last_plan = Some(out.plan);
        self.last_keys = Some((out.applied, speed));
        (out.applied, speed)
    }

    /// Keeps the waypoints and re-applies the last speed key to the current speed.
    pub fn hold(&mut self, world: &WorldState) -> Option<&WaypointPlan> {
        let (_, speed) = self.last_keys?;
        let target = target_speed(speed, world, &self.config);
        let plan = self.last_plan.as_mut()?;
        plan.target_speed = target;
        Some(plan)
    }

    pub fn last_keys(&self) -> Option<(DirectionKey, SpeedKey)> {
        self.last_keys
    }

    pub fn plan(&self) -> Option<&WaypointPlan> {
        self.last_plan.as_ref()
    }

    pub fn control(&self, world: &WorldState, dt: f64) -> VehicleControl {
        match &self.last_plan {
            Some(plan) => control(plan, &world.ego, dt, &self.config, &self.params),
            None => VehicleControl { steer: 0.0, throttle: 0.0, brake: 0.0 },
        }
    }
}
