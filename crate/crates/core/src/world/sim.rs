//! Fixed-step world update.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Pose};

use super::{ControlKind, LightState, Motion, TrailAnchor, WorldState};

pub const DEFAULT_DT: f64 = 0.1;
/// Trails keep one anchor every this many ticks.
pub const TRAIL_INTERVAL_TICKS: u64 = 5;
const TRAIL_KEEP: usize = 8;

/// Stopping within this window in front of a stop sign counts as halting for it.
const STOP_WINDOW: (f64, f64) = (-0.5, 10.0);
const STOP_SPEED: f64 = 0.1;
const STOP_DWELL: f64 = 1.0;

/// Normalized vehicle command: steer in `[-1, 1]` (positive right), pedals in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleControl {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl VehicleControl {
    pub fn clamped(self) -> Self {
        Self {
            steer: self.steer.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// Road-wheel angle at full steer, radians.
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_brake: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.9,
            max_steer: 0.6,
            max_accel: 3.0,
            max_brake: 8.0,
        }
    }
}

pub fn step(world: &WorldState, control: &VehicleControl, dt: f64) -> WorldState {
    step_with(world, control, dt, &VehicleParams::default())
}

/// Advances the world by one tick of `dt` seconds.
pub fn step_with(
    world: &WorldState,
    control: &VehicleControl,
    dt: f64,
    params: &VehicleParams,
) -> WorldState {
    let mut next = world.clone();
    next.frame_index += 1;
    advance_ego(&mut next, &control.clamped(), dt, params);
    for actor in &mut next.actors {
        match &mut actor.motion {
            Motion::Static => {}
            Motion::Constant => {
                let p = actor.pose.position().add(actor.velocity().scale(dt));
                actor.pose = Pose::new(p.x, p.y, actor.pose.heading);
            }
            Motion::Path { path, s } => {
                *s += actor.speed * dt;
                let p = path.point_at(*s);
                actor.pose = Pose::new(p.x, p.y, path.heading_at(*s));
            }
        }
    }
    for c in &mut next.controls {
        if let (Some(state), Some(phase)) = (c.state.as_mut(), c.phase.as_mut()) {
            phase.timer -= dt;
            while phase.timer <= 1e-9 {
                *state = match state {
                    LightState::Red => LightState::Green,
                    LightState::Green => LightState::Yellow,
                    LightState::Yellow => LightState::Red,
                };
                phase.timer += phase.duration(*state);
            }
        }
    }
    refresh_derived(&mut next);
    update_stop_dwell(&mut next, dt);
    record_trails(&mut next);
    next
}

fn advance_ego(world: &mut WorldState, control: &VehicleControl, dt: f64, params: &VehicleParams) {
    let ego = &mut world.ego;
    let v = ego.speed;
    let f_old = ego.pose.forward();
    let delta = control.steer * params.max_steer;
    let heading = ego.pose.heading + v / params.wheelbase * delta.tan() * dt;
    let f_new = Point::unit(heading);
    // rear-axle integration expressed on the box center
    let center = ego
        .pose
        .position()
        .add(f_old.scale(v * dt))
        .add(f_new.sub(f_old).scale(params.wheelbase / 2.0));
    ego.pose = Pose::new(center.x, center.y, crate::geometry::wrap_angle(heading));
    let accel = control.throttle * params.max_accel - control.brake * params.max_brake;
    ego.speed = (v + accel * dt).max(0.0);
}

/// Recomputes quantities derived from the ego pose.
pub fn refresh_derived(world: &mut WorldState) {
    world.ego.route_progress = world.track_progress(world.ego.route_progress);
    let pos = world.ego.pose.position();
    match world.containing_lanes(pos).into_iter().next() {
        Some(c) => {
            world.ego.lateral_offset = Some(c.projection.lateral);
            world.ego.current_lane = Some(c.lane_id);
        }
        None => {
            world.ego.current_lane = None;
            world.ego.lateral_offset = world.nearest_waypoint(pos).map(|m| m.lateral_offset);
        }
    }
    let front = world.ego_front_s();
    let passed = world
        .controls
        .iter()
        .filter(|c| c.kind == ControlKind::SpeedLimitSign && c.affects_ego)
        .filter_map(|c| Some((world.control_route_s(c)?, c.value?)))
        .filter(|(s, _)| *s <= front)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((_, v)) = passed {
        world.ego.remembered_speed_limit = Some(v);
    }
    world.ego.command = world.compute_command();
    world.weather.in_tunnel = world.scenario_meta.tunnels.iter().any(|z| z.contains(pos));
}

fn update_stop_dwell(world: &mut WorldState, dt: f64) {
    let front = world.ego_front_s();
    let signs: Vec<(String, f64)> = world
        .controls
        .iter()
        .filter(|c| c.kind == ControlKind::StopSign && c.affects_ego)
        .filter_map(|c| Some((c.id.clone(), world.control_route_s(c)?)))
        .collect();
    for (id, s) in signs {
        if world.ego.cleared_stops.contains(&id) {
            continue;
        }
        let d = s - front;
        let dwell = world.ego.stop_dwell.entry(id.clone()).or_insert(0.0);
        if d >= STOP_WINDOW.0 && d <= STOP_WINDOW.1 && world.ego.speed < STOP_SPEED {
            *dwell += dt;
        } else {
            *dwell = 0.0;
        }
        if *dwell >= STOP_DWELL - 1e-9 {
            world.ego.cleared_stops.insert(id);
        }
    }
}

pub(crate) fn record_trails(world: &mut WorldState) {
    if world.frame_index % TRAIL_INTERVAL_TICKS != 0 {
        return;
    }
    for actor in &world.actors {
        let trail = world.trails.entry(actor.id.clone()).or_default();
        trail.push(TrailAnchor {
            frame_index: world.frame_index,
            position: actor.pose.position(),
        });
        if trail.len() > TRAIL_KEEP {
            trail.remove(0);
        }
    }
}

impl WorldState {
    /// Trail anchors strictly before the current frame covering the last `seconds`.
    pub fn trail(&self, actor_id: &str, seconds: f64) -> Vec<TrailAnchor> {
        let horizon = (seconds / DEFAULT_DT).round() as u64;
        self.trails
            .get(actor_id)
            .map(|t| {
                t.iter()
                    .filter(|a| {
                        a.frame_index < self.frame_index
                            && self.frame_index - a.frame_index <= horizon
                    })
                    .copied()
                    .collect()
            })
            .unwrap_or_default()
    }
}
