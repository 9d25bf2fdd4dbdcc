//! Per-tick infraction detection and episode termination.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::metrics::{InfractionEvent, InfractionKind};
use crate::world::{ControlKind, LightState, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Route distance beyond which the ego counts as off route.
    pub off_route_distance: f64,
    pub off_route_seconds: f64,
    /// The route is complete once progress is within this of its end.
    pub completion_margin: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            off_route_distance: 15.0,
            off_route_seconds: 3.0,
            completion_margin: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct InfractionDetector {
    pub config: DetectorConfig,
    touching: BTreeSet<String>,
    off_route_time: f64,
}

impl InfractionDetector {
    pub fn new(config: DetectorConfig) -> Self {
        Self { config, ..Default::default() }
    }

    /// Events caused by the transition `prev -> next`.
    pub fn observe(&mut self, prev: &WorldState, next: &WorldState, dt: f64) -> Vec<InfractionEvent> {
        let mut events = Vec::new();
        let frame = next.frame_index;
        let ego_fp = next.ego.footprint();
        let mut now = BTreeSet::new();
        for a in &next.actors {
            if a.footprint().overlaps(&ego_fp) {
                now.insert(a.id.clone());
                if !self.touching.contains(&a.id) {
                    events.push(InfractionEvent {
                        kind: InfractionKind::Collision,
                        frame_index: frame,
                        detail: format!("collision with {} ({})", a.tag(), a.kind.as_str()),
                    });
                }
            }
        }
        self.touching = now;

        let on_route = next
            .route_projection(next.ego.pose.position())
            .is_some_and(|p| p.distance < 4.0);
        if on_route {
            let (f0, f1) = (prev.ego_front_s(), next.ego_front_s());
            for (c_prev, c) in prev.controls.iter().zip(&next.controls) {
                if !c.affects_ego {
                    continue;
                }
                let Some(s) = next.control_route_s(c) else { continue };
                if !(f0 < s && s <= f1) {
                    continue;
                }
                match c.kind {
                    ControlKind::TrafficLight if c_prev.state == Some(LightState::Red) => events.push(InfractionEvent {
                        kind: InfractionKind::RedLight,
                        frame_index: frame,
                        detail: format!("crossed {} on red", c.tag()),
                    }),
                    ControlKind::StopSign if !next.ego.cleared_stops.contains(&c.id) => events.push(InfractionEvent {
                        kind: InfractionKind::StopSign,
                        frame_index: frame,
                        detail: format!("crossed {} without stopping", c.tag()),
                    }),
                    _ => {}
                }
            }
        }

        let off = next
            .route_projection(next.ego.pose.position())
            .map_or(true, |p| p.distance > self.config.off_route_distance);
        self.off_route_time = if off { self.off_route_time + dt } else { 0.0 };
        events
    }

    pub fn off_route(&self) -> bool {
        self.off_route_time >= self.config.off_route_seconds
    }

    pub fn route_completion(&self, world: &WorldState) -> f64 {
        let len = (world.ego.route.length() - self.config.completion_margin).max(1e-9);
        (world.ego.route_progress / len).clamp(0.0, 1.0)
    }

    pub fn completed(&self, world: &WorldState) -> bool {
        self.route_completion(world) >= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::world::{bundled_scenario, step, VehicleControl};

    #[test]
    fn collision_counted_once_per_contact() {
        let w0 = bundled_scenario("ObstacleAhead", 0).unwrap();
        let mut w1 = w0.clone();
        let ob = w1.actor("obstacle").unwrap().pose;
        w1.ego.pose = Pose::new(ob.x - 4.0, ob.y, 0.0);
        let mut d = InfractionDetector::default();
        let e = d.observe(&w0, &w1, 0.1);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].kind, InfractionKind::Collision);
        assert!(d.observe(&w1, &w1, 0.1).is_empty());
    }

    #[test]
    fn running_the_red_light() {
        let mut w = bundled_scenario("RedLightJunctionTurn", 0).unwrap();
        let stop_s = w.control_route_s(w.control("tl1").unwrap()).unwrap();
        w.ego.pose.x = stop_s - w.ego.bbox.length / 2.0 - 0.5;
        w.ego.speed = 10.0;
        w.ego.route_progress = w.ego.pose.x;
        w = step(&w, &VehicleControl::default(), 0.0);
        let next = step(&w, &VehicleControl::default(), 0.1);
        let mut d = InfractionDetector::default();
        let e = d.observe(&w, &next, 0.1);
        assert!(e.iter().any(|e| e.kind == InfractionKind::RedLight), "{e:?}");
    }
}
