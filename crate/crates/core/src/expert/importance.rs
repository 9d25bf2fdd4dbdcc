use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Pose};
use crate::world::{Actor, WorldState};

use super::ExpertConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub actor_id: String,
    pub is_role: bool,
    pub is_dangerous: bool,
    /// Center distance to the ego, meters.
    pub distance: f64,
}

/// Constant-velocity projection of the actor footprint comes within the ego
/// route corridor before the horizon ends.
pub(super) fn is_dangerous(world: &WorldState, actor: &Actor, cfg: &ExpertConfig) -> bool {
    let ego = &world.ego;
    if ego.route.len() < 2 {
        return false;
    }
    let s0 = (ego.route_progress - ego.bbox.length / 2.0).max(0.0);
    let corridor = ego.route.slice(s0, (ego.route_progress + 60.0).min(ego.route.length()));
    let pts = corridor.points();
    if pts.len() < 2 {
        return false;
    }
    let reach = ego.bbox.width / 2.0 + cfg.corridor_margin;
    let vel = actor.velocity();
    let steps = (cfg.danger_horizon / cfg.danger_step).round() as usize;
    (0..=steps).any(|k| {
        let t = k as f64 * cfg.danger_step;
        let c = actor.pose.position().add(vel.scale(t));
        let fp = Obb::new(Pose::new(c.x, c.y, actor.pose.heading), actor.bbox.length, actor.bbox.width);
        pts.windows(2).any(|w| fp.distance_to_segment(w[0], w[1]) <= reach)
    })
}

pub(super) fn rank(world: &WorldState, cfg: &ExpertConfig) -> Vec<ImportanceRecord> {
    let ego = world.ego.pose;
    let mut out: Vec<ImportanceRecord> = world
        .actors
        .iter()
        .filter_map(|a| {
            let distance = a.pose.position().dist(ego.position());
            if distance > cfg.importance_radius {
                return None;
            }
            let dangerous = is_dangerous(world, a, cfg);
            let (lon, _) = ego.to_local(a.pose.position());
            if lon < -cfg.behind_cutoff && !a.is_role && !dangerous {
                return None;
            }
            Some(ImportanceRecord {
                actor_id: a.id.clone(),
                is_role: a.is_role,
                is_dangerous: dangerous,
                distance,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        (!a.is_role, !a.is_dangerous)
            .cmp(&(!b.is_role, !b.is_dangerous))
            .then(a.distance.total_cmp(&b.distance))
            .then(a.actor_id.cmp(&b.actor_id))
    });
    out
}
