//! Privileged state queries shared by the expert, renderers and the action module.

use crate::geometry::{Point, Projection};

use super::{Lane, LaneId, NavCommand, TrafficControl, WorldState};

/// Search radius for [`WorldState::nearest_waypoint`], about two lane widths.
pub const DEFAULT_WAYPOINT_RADIUS: f64 = 8.0;

/// Distance before a junction connector at which the ego counts as entering it.
const JUNCTION_ENTRY_DISTANCE: f64 = 3.0;
/// Lookahead for announcing the next junction maneuver as the navigation command.
const COMMAND_LOOKAHEAD: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointMatch {
    pub lane_id: LaneId,
    pub point: Point,
    /// Signed offset from the centerline; negative is left.
    pub lateral_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainingLane {
    pub lane_id: LaneId,
    pub projection: Projection,
    pub on_route: bool,
}

/// Arc-length interval a lane occupies along the route polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpan {
    pub lane_id: LaneId,
    pub start: f64,
    pub end: f64,
    pub in_junction: bool,
}

impl WorldState {
    pub fn nearest_waypoint(&self, position: Point) -> Option<WaypointMatch> {
        self.nearest_waypoint_within(position, DEFAULT_WAYPOINT_RADIUS)
    }

    pub fn nearest_waypoint_within(&self, position: Point, radius: f64) -> Option<WaypointMatch> {
        let mut best: Option<(f64, &Lane, Projection)> = None;
        for lane in &self.lane_graph.lanes {
            if let Some(p) = lane.centerline.project(position) {
                if p.distance <= radius && best.as_ref().map_or(true, |(d, _, _)| p.distance < *d) {
                    best = Some((p.distance, lane, p));
                }
            }
        }
        best.map(|(_, lane, p)| WaypointMatch {
            lane_id: lane.id.clone(),
            point: p.point,
            lateral_offset: p.lateral,
        })
    }

    /// Lanes whose drivable strip contains `position`, route lanes first.
    pub fn containing_lanes(&self, position: Point) -> Vec<ContainingLane> {
        let mut out: Vec<ContainingLane> = self
            .lane_graph
            .lanes
            .iter()
            .filter_map(|lane| {
                let p = lane.centerline.project(position)?;
                (p.interior && p.lateral.abs() <= lane.width / 2.0).then(|| ContainingLane {
                    lane_id: lane.id.clone(),
                    projection: p,
                    on_route: self.ego.route_lanes.contains(&lane.id),
                })
            })
            .collect();
        out.sort_by(|a, b| {
            b.on_route
                .cmp(&a.on_route)
                .then(a.projection.lateral.abs().total_cmp(&b.projection.lateral.abs()))
                .then(a.lane_id.cmp(&b.lane_id))
        });
        out
    }

    pub fn route_spans(&self) -> Vec<RouteSpan> {
        let mut start = 0.0;
        self.ego
            .route_lanes
            .iter()
            .filter_map(|id| {
                let lane = self.lane(id)?;
                let end = start + lane.centerline.length();
                let span = RouteSpan {
                    lane_id: id.clone(),
                    start,
                    end,
                    in_junction: lane.in_junction,
                };
                start = end;
                Some(span)
            })
            .collect()
    }

    pub fn route_lane_at(&self, s: f64) -> Option<RouteSpan> {
        let spans = self.route_spans();
        spans
            .iter()
            .find(|sp| s >= sp.start && s < sp.end)
            .or_else(|| spans.last().filter(|sp| s >= sp.end))
            .or_else(|| spans.first())
            .cloned()
    }

    pub fn route_projection(&self, p: Point) -> Option<Projection> {
        self.ego.route.project(p)
    }

    /// Route arc length of the ego's front bumper.
    pub fn ego_front_s(&self) -> f64 {
        self.ego.route_progress + self.ego.bbox.length / 2.0
    }

    /// Speed limit in force: the last passed sign, else the lane's, else the scenario default.
    pub fn effective_speed_limit(&self) -> f64 {
        if let Some(v) = self.ego.remembered_speed_limit {
            return v;
        }
        self.ego
            .current_lane
            .as_deref()
            .and_then(|id| self.lane(id))
            .and_then(|l| l.speed_limit)
            .or_else(|| {
                self.route_lane_at(self.ego.route_progress)
                    .and_then(|sp| self.lane(&sp.lane_id))
                    .and_then(|l| l.speed_limit)
            })
            .unwrap_or(self.scenario_meta.default_speed_limit)
    }

    /// Route arc length of a control's stop point, when it governs a route lane.
    pub fn control_route_s(&self, control: &TrafficControl) -> Option<f64> {
        let lane = control.lane.as_ref()?;
        if !self.ego.route_lanes.contains(lane) {
            return None;
        }
        let p = control.stop_point?;
        self.route_projection(p).map(|pr| pr.s)
    }

    pub fn next_junction_span(&self) -> Option<RouteSpan> {
        let s = self.ego.route_progress;
        self.route_spans().into_iter().find(|sp| sp.in_junction && sp.end > s)
    }

    /// The ego is inside a junction connector or about to enter one.
    pub fn ego_at_junction(&self) -> bool {
        let pos = self.ego.pose.position();
        if self
            .containing_lanes(pos)
            .iter()
            .any(|c| c.on_route && self.lane(&c.lane_id).is_some_and(|l| l.in_junction))
        {
            return true;
        }
        if self.ego.route_lanes.is_empty() {
            return false;
        }
        match self.next_junction_span() {
            Some(sp) => {
                let front = self.ego_front_s();
                let on_route = self.route_projection(pos).is_some_and(|p| p.distance < 6.0);
                on_route && sp.start - front <= JUNCTION_ENTRY_DISTANCE
            }
            None => false,
        }
    }

    pub(crate) fn compute_command(&self) -> NavCommand {
        match self.next_junction_span() {
            Some(sp) if sp.start - self.ego_front_s() <= COMMAND_LOOKAHEAD => self
                .lane(&sp.lane_id)
                .map(|l| l.maneuver())
                .unwrap_or(NavCommand::FollowLane),
            _ => NavCommand::FollowLane,
        }
    }

    /// Route arc length of the ego projection, searched near the previous progress
    /// so that self-overlapping routes do not jump.
    pub(crate) fn track_progress(&self, previous: f64) -> f64 {
        let route = &self.ego.route;
        if route.len() < 2 {
            return 0.0;
        }
        let lo = (previous - 15.0).max(0.0);
        let hi = (previous + 40.0).min(route.length());
        let window = route.slice(lo, hi.max(lo + 1e-6));
        match window.project(self.ego.pose.position()) {
            Some(p) if p.distance < 25.0 => (lo + p.s).max(previous).min(route.length()),
            _ => route
                .project(self.ego.pose.position())
                .map(|p| p.s.max(previous))
                .unwrap_or(previous),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::bundled_scenario;
    use approx::assert_abs_diff_eq;

    fn one_lane_world() -> WorldState {
        bundled_scenario("FollowLeadVehicle", 0).unwrap()
    }

    #[test]
    fn nearest_on_centerline_has_zero_offset() {
        let w = one_lane_world();
        let m = w.nearest_waypoint(Point::new(50.0, 0.0)).unwrap();
        assert_eq!(m.lane_id, "r0");
        assert_abs_diff_eq!(m.lateral_offset, 0.0);
    }

    #[test]
    fn nearest_left_is_negative() {
        let w = one_lane_world();
        let m = w.nearest_waypoint(Point::new(50.0, -2.0)).unwrap();
        assert_abs_diff_eq!(m.lateral_offset, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn far_off_road_is_absent() {
        let w = one_lane_world();
        assert!(w.nearest_waypoint(Point::new(50.0, 50.0)).is_none());
    }

    #[test]
    fn brute_force_projection_agrees() {
        // dense sampling of every centerline as an independent check
        let w = bundled_scenario("RedLightJunctionTurn", 0).unwrap();
        let queries = [Point::new(30.0, 2.0), Point::new(65.0, -6.0), Point::new(71.0, -40.0)];
        for q in queries {
            let m = w.nearest_waypoint(q).unwrap();
            let mut best = f64::INFINITY;
            for lane in &w.lane_graph.lanes {
                let len = lane.centerline.length();
                let n = (len / 0.001) as usize;
                for i in 0..=n {
                    let p = lane.centerline.point_at(len * i as f64 / n as f64);
                    best = best.min(p.dist(q));
                }
            }
            assert_abs_diff_eq!(m.point.dist(q), best, epsilon = 1e-3);
        }
    }
}
