use serde::{Deserialize, Serialize};

use crate::geometry::wrap_angle;
use crate::world::WorldState;

use super::ExpertConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodKind {
    None,
    RoadUnrecoverable,
    RoadRecoverable,
    LaneOrientation,
    LaneLateral,
    JunctionRelaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryDirection {
    Left,
    Right,
    None,
}

impl RecoveryDirection {
    pub fn word(&self) -> &'static str {
        match self {
            RecoveryDirection::Left => "left",
            RecoveryDirection::Right => "right",
            RecoveryDirection::None => "nowhere",
        }
    }

    fn from_lateral(lat: f64) -> Self {
        if lat > 0.0 {
            RecoveryDirection::Right
        } else {
            RecoveryDirection::Left
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodStatus {
    pub kind: OodKind,
    /// Absolute heading error against the route direction, radians.
    pub deviation_angle: f64,
    /// Distance to the target centerline, meters.
    pub lateral_error: f64,
    pub recovery_direction: RecoveryDirection,
}

pub(super) fn classify(world: &WorldState, cfg: &ExpertConfig) -> OodStatus {
    let ego = &world.ego;
    let pos = ego.pose.position();
    let route = world.route_projection(pos);
    let deviation = route
        .map(|p| wrap_angle(ego.pose.heading - p.heading).abs())
        .unwrap_or(0.0);
    let route_error = route.map(|p| p.distance).unwrap_or(0.0);
    let status = |kind, lateral_error, recovery_direction| OodStatus {
        kind,
        deviation_angle: deviation,
        lateral_error,
        recovery_direction,
    };

    let Some(wp) = world.nearest_waypoint_within(pos, cfg.waypoint_radius) else {
        return status(OodKind::RoadUnrecoverable, route_error, RecoveryDirection::None);
    };
    let containing = world.containing_lanes(pos);
    if containing.is_empty() {
        // steer toward the route when it is close, else toward the nearest road
        let target = match route {
            Some(p) if p.distance <= cfg.waypoint_radius => p.point,
            _ => wp.point,
        };
        let (_, lat) = ego.pose.to_local(target);
        return status(
            OodKind::RoadRecoverable,
            wp.lateral_offset.abs(),
            RecoveryDirection::from_lateral(lat),
        );
    }
    if containing
        .iter()
        .any(|c| world.lane(&c.lane_id).is_some_and(|l| l.in_junction))
    {
        return status(OodKind::JunctionRelaxed, route_error, RecoveryDirection::None);
    }
    if deviation > cfg.orientation_trigger_deg.to_radians() {
        let turn = route.map(|p| wrap_angle(p.heading - ego.pose.heading)).unwrap_or(0.0);
        // an exact reversal turns left
        let dir = if turn > 0.0 && turn < std::f64::consts::PI {
            RecoveryDirection::Right
        } else {
            RecoveryDirection::Left
        };
        return status(OodKind::LaneOrientation, route_error, dir);
    }
    if !containing[0].on_route {
        let dir = route
            .map(|p| RecoveryDirection::from_lateral(ego.pose.to_local(p.point).1))
            .unwrap_or(RecoveryDirection::None);
        return status(OodKind::LaneLateral, route_error, dir);
    }
    status(OodKind::None, route_error, RecoveryDirection::None)
}
