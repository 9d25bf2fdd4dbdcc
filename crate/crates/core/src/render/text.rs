//! Perception summary for text-only policies.

use serde::{Deserialize, Serialize};

use crate::geometry::{compass8, wrap_angle};
use crate::world::{Actor, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextFilter {
    pub min_lidar_points: u32,
    pub max_distance: f64,
    /// Kept for format compatibility; the world has no elevation so every
    /// actor passes.
    pub max_vertical: f64,
}

impl Default for TextFilter {
    fn default() -> Self {
        Self {
            min_lidar_points: 3,
            max_distance: 50.0,
            max_vertical: 30.0,
        }
    }
}

impl TextFilter {
    pub fn admits(&self, world: &WorldState, actor: &Actor) -> bool {
        let d = actor.pose.position().dist(world.ego.pose.position());
        let vertical = 0.0;
        actor.lidar_point_proxy >= self.min_lidar_points
            && d <= self.max_distance
            && vertical <= self.max_vertical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSummary {
    pub lines: Vec<String>,
    pub included: Vec<String>,
}

impl std::fmt::Display for TextSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.lines.join("\n"))
    }
}

pub fn render_text(world: &WorldState, filter: &TextFilter) -> TextSummary {
    let ego = &world.ego;
    let mut lines = vec![format!(
        "The ego vehicle is driving at {:.1} m/s{}.",
        ego.speed,
        ego.current_lane
            .as_deref()
            .map(|l| format!(" in lane {l}"))
            .unwrap_or_default()
    )];
    let mut included = Vec::new();
    for a in &world.actors {
        if !filter.admits(world, a) {
            continue;
        }
        let (lon, lat) = ego.pose.to_local(a.pose.position());
        let motion = if a.speed < 0.1 {
            "is not moving".to_string()
        } else {
            format!(
                "is moving {} at {:.1} m/s",
                compass8(wrap_angle(a.pose.heading - ego.pose.heading)),
                a.speed
            )
        };
        lines.push(format!(
            "{} ({}, {}) is {:.1} m {} and {:.1} m to the {}, and {}.",
            a.tag(),
            a.kind.as_str(),
            a.name,
            lon.abs(),
            if lon >= 0.0 { "ahead" } else { "behind" },
            lat.abs(),
            if lat >= 0.0 { "right" } else { "left" },
            motion
        ));
        included.push(a.id.clone());
    }
    for c in world.controls.iter().filter(|c| c.affects_ego) {
        let d = c.pose.position().dist(ego.pose.position());
        if d > filter.max_distance {
            continue;
        }
        let detail = match (c.state, c.value) {
            (Some(s), _) => format!(" showing {}", s.as_str()),
            (_, Some(v)) => format!(" reading {:.0} km/h", v * 3.6),
            _ => String::new(),
        };
        lines.push(format!("{} {}{} is {:.1} m away.", c.tag(), c.kind.describe(), detail, d));
    }
    TextSummary { lines, included }
}
