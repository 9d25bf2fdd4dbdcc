//! Relations between actors and the path the ego is currently driving.

use crate::geometry::{wrap_angle, Polyline};
use crate::world::{Actor, ActorKind, WorldState};

/// The path the ego follows right now: the route while on a route lane,
/// otherwise the centerline of the lane it occupies.
pub(super) struct EgoPath {
    pub path: Polyline,
    pub s: f64,
    pub on_route: bool,
    pub lane_width: f64,
}

impl EgoPath {
    pub fn of(world: &WorldState) -> Self {
        let ego = &world.ego;
        let pos = ego.pose.position();
        let route_width = world
            .route_lane_at(ego.route_progress)
            .and_then(|sp| world.lane(&sp.lane_id))
            .map(|l| l.width)
            .unwrap_or(3.5);
        let off_route_lane = ego
            .current_lane
            .as_deref()
            .filter(|id| !ego.route_lanes.iter().any(|r| r == id))
            .and_then(|id| world.lane(id));
        if let Some(lane) = off_route_lane {
            let mut path = lane.centerline.clone();
            if let Some(p) = path.project(pos) {
                if wrap_angle(p.heading - ego.pose.heading).abs() > std::f64::consts::FRAC_PI_2 {
                    path = path.reversed();
                }
            }
            let s = path.project(pos).map(|p| p.s).unwrap_or(0.0);
            return Self { path, s, on_route: false, lane_width: lane.width };
        }
        Self {
            path: ego.route.clone(),
            s: ego.route_progress,
            on_route: true,
            lane_width: route_width,
        }
    }

    pub fn front_s(&self, world: &WorldState) -> f64 {
        self.s + world.ego.bbox.length / 2.0
    }

    pub fn rear_s(&self, world: &WorldState) -> f64 {
        self.s - world.ego.bbox.length / 2.0
    }
}

/// An actor's footprint measured along a path.
#[derive(Debug, Clone)]
pub(super) struct PathHit<'a> {
    pub actor: &'a Actor,
    pub s_rear: f64,
    pub s_front: f64,
    pub lateral: f64,
    pub in_lane: bool,
    /// Absolute heading difference to the path direction.
    pub heading_diff: f64,
}

impl PathHit<'_> {
    pub fn is_stopped(&self) -> bool {
        self.actor.speed < 0.5
    }

    pub fn is_same_direction(&self) -> bool {
        self.heading_diff < std::f64::consts::FRAC_PI_3
    }

    pub fn is_oncoming(&self) -> bool {
        self.heading_diff > 2.0 * std::f64::consts::FRAC_PI_3
    }
}

pub(super) fn hit<'a>(path: &Polyline, lane_width: f64, actor: &'a Actor) -> Option<PathHit<'a>> {
    let center = path.project(actor.pose.position())?;
    if !center.interior {
        return None;
    }
    let mut s_min = center.s;
    let mut s_max = center.s;
    let mut lat_min = center.lateral;
    let mut lat_max = center.lateral;
    let mut min_abs = center.lateral.abs();
    for c in actor.footprint().corners() {
        if let Some(p) = path.project(c) {
            s_min = s_min.min(p.s);
            s_max = s_max.max(p.s);
            lat_min = lat_min.min(p.lateral);
            lat_max = lat_max.max(p.lateral);
            min_abs = min_abs.min(p.lateral.abs());
        }
    }
    let half = lane_width / 2.0 - 0.3;
    Some(PathHit {
        actor,
        s_rear: s_min,
        s_front: s_max,
        lateral: center.lateral,
        in_lane: min_abs < half || (lat_min < 0.0 && lat_max > 0.0),
        heading_diff: wrap_angle(actor.pose.heading - center.heading).abs(),
    })
}

/// Actors overlapping the ego lane ahead of the ego rear, nearest first.
pub(super) fn in_lane_ahead<'a>(world: &'a WorldState, ep: &EgoPath, range: f64) -> Vec<PathHit<'a>> {
    let front = ep.front_s(world);
    let mut hits: Vec<PathHit> = world
        .actors
        .iter()
        .filter_map(|a| hit(&ep.path, ep.lane_width, a))
        .filter(|h| h.in_lane && h.s_front > ep.rear_s(world) && h.s_rear < front + range)
        .collect();
    hits.sort_by(|a, b| a.s_rear.total_cmp(&b.s_rear).then(a.actor.id.cmp(&b.actor.id)));
    hits
}

/// Static obstacles and stopped road users are handled as blockages, moving
/// ones as traffic.
pub(super) fn is_blockage(h: &PathHit) -> bool {
    h.actor.kind == ActorKind::StaticObstacle || (h.is_stopped() && h.actor.kind != ActorKind::Pedestrian)
}
