//! Rule cascade from OOD status to an expert decision.

use crate::keys::{DirectionKey, SpeedKey};
use crate::world::{ControlKind, LightState, NavCommand, WorldState};

use super::importance::is_dangerous;
use super::ood::{OodKind, OodStatus, RecoveryDirection};
use super::scene::{hit, in_lane_ahead, is_blockage, EgoPath, PathHit};
use super::{Cause, ExpertConfig, ExpertDecision};

/// One speed bound with its explanation.
#[derive(Debug, Clone)]
struct Bound {
    key: SpeedKey,
    cause: Cause,
    text: String,
}

fn kmh(v: f64) -> f64 {
    (v * 3.6).round()
}

fn deviate(dir: RecoveryDirection) -> DirectionKey {
    match dir {
        RecoveryDirection::Right => DirectionKey::DeviateRight,
        _ => DirectionKey::DeviateLeft,
    }
}

fn change_lane(dir: RecoveryDirection) -> DirectionKey {
    match dir {
        RecoveryDirection::Right => DirectionKey::ChangeLaneRight,
        _ => DirectionKey::ChangeLaneLeft,
    }
}

pub(super) fn decide(world: &WorldState, ood: &OodStatus, cfg: &ExpertConfig) -> ExpertDecision {
    let ep = EgoPath::of(world);
    match ood.kind {
        OodKind::RoadUnrecoverable => ExpertDecision {
            direction: DirectionKey::FollowLane,
            speed: SpeedKey::Stop,
            rationale: "The ego vehicle has left the roadway and no drivable lane is nearby, so it must stop and wait for assistance.".into(),
            speed_cause: Cause::OffRoad,
        },
        OodKind::RoadRecoverable => {
            let dir = ood.recovery_direction;
            let speed = speed_plan(world, &ep, cfg, Some((cfg.ood_speed_cap, Cause::OffRoad)), false);
            compose(
                deviate(dir),
                speed,
                format!(
                    "The ego vehicle has gone off the road and should steer {} back toward the road centerline.",
                    dir.word()
                ),
            )
        }
        OodKind::LaneOrientation => {
            let deg = ood.deviation_angle.to_degrees();
            let dir = ood.recovery_direction;
            if deg > cfg.strong_misalignment_deg {
                let speed = speed_plan(world, &ep, cfg, Some((cfg.uturn_speed_cap, Cause::Misalignment)), false);
                let key = if dir == RecoveryDirection::Right {
                    DirectionKey::TurnRight
                } else {
                    DirectionKey::TurnLeft
                };
                compose(
                    key,
                    speed,
                    format!(
                        "The ego vehicle heading is {deg:.0} degrees off the lane direction, nearly reversed, so it should make a controlled U-turn to the {}.",
                        dir.word()
                    ),
                )
            } else {
                let speed = speed_plan(world, &ep, cfg, Some((cfg.ood_speed_cap, Cause::Misalignment)), false);
                let strength = if deg >= cfg.mild_misalignment_deg { "strongly" } else { "slightly" };
                compose(
                    deviate(dir),
                    speed,
                    format!(
                        "The ego vehicle heading is {deg:.0} degrees off the lane direction, so it should steer {strength} to the {} to realign with the lane.",
                        dir.word()
                    ),
                )
            }
        }
        OodKind::LaneLateral => lane_lateral(world, &ep, ood, cfg),
        OodKind::None | OodKind::JunctionRelaxed => nominal(world, &ep, ood, cfg),
    }
}

fn compose(direction: DirectionKey, speed: Bound, lead: String) -> ExpertDecision {
    ExpertDecision {
        direction,
        speed: speed.key,
        rationale: format!("{lead} {}", speed.text),
        speed_cause: speed.cause,
    }
}

fn junction_direction(world: &WorldState) -> DirectionKey {
    let pos = world.ego.pose.position();
    let inside = world
        .containing_lanes(pos)
        .into_iter()
        .filter_map(|c| world.lane(&c.lane_id).filter(|l| l.in_junction).map(|l| (c.on_route, l)))
        .max_by_key(|(on_route, _)| *on_route)
        .map(|(_, l)| l.maneuver());
    let cmd = inside
        .or_else(|| world.next_junction_span().and_then(|sp| world.lane(&sp.lane_id)).map(|l| l.maneuver()))
        .unwrap_or(NavCommand::GoStraight);
    match cmd {
        NavCommand::TurnLeft => DirectionKey::TurnLeft,
        NavCommand::TurnRight => DirectionKey::TurnRight,
        _ => DirectionKey::GoStraight,
    }
}

fn nominal(world: &WorldState, ep: &EgoPath, ood: &OodStatus, cfg: &ExpertConfig) -> ExpertDecision {
    let at_junction = ood.kind == OodKind::JunctionRelaxed || world.ego_at_junction();
    if at_junction {
        let direction = junction_direction(world);
        let cap = (direction != DirectionKey::GoStraight).then_some((cfg.turn_speed_cap, Cause::Junction));
        let speed = speed_plan(world, ep, cfg, cap, false);
        let lead = format!("The ego vehicle is at the junction and should {}.", direction.describe());
        return compose(direction, speed, lead);
    }

    let front = ep.front_s(world);
    let hits = in_lane_ahead(world, ep, cfg.obstacle_lookahead);
    let obstacle = hits.iter().find(|h| is_blockage(h) && h.s_rear >= front - 0.5);
    if let Some(ob) = obstacle {
        if ep.on_route {
            if let Some(side) = lane_change_side(world, ob) {
                let mut speed = speed_plan(world, ep, cfg, None, true);
                if speed.key == SpeedKey::Accelerate {
                    speed.key = SpeedKey::Keep;
                    speed.text = "It keeps its speed during the lane change.".into();
                }
                let direction = change_lane(side);
                let lead = format!(
                    "{} blocks the ego lane {:.0} m ahead and the {} lane is clear, so the ego vehicle should {} early to pass it.",
                    ob.actor.tag(),
                    (ob.s_rear - front).max(0.0),
                    side.word(),
                    direction.describe()
                );
                return compose(direction, speed, lead);
            }
        }
    }
    let rear = ep.rear_s(world);
    let invader = hits.iter().find(|h| {
        h.is_oncoming() && !h.is_stopped() && h.s_front > rear - 1.0 && h.s_rear < front + cfg.obstacle_lookahead
    });
    if let Some(inv) = invader {
        let (direction, side) = if inv.lateral <= 0.0 {
            (DirectionKey::DeviateRight, "right")
        } else {
            (DirectionKey::DeviateLeft, "left")
        };
        let speed = speed_plan(world, ep, cfg, None, false);
        let lead = format!(
            "The oncoming vehicle {} is invading the ego lane, so the ego vehicle should shift to the {side} within its lane to avoid it.",
            inv.actor.tag()
        );
        return compose(direction, speed, lead);
    }
    let speed = speed_plan(world, ep, cfg, None, false);
    compose(DirectionKey::FollowLane, speed, "The ego vehicle should follow the current lane.".into())
}

fn lane_change_side(world: &WorldState, ob: &PathHit) -> Option<RecoveryDirection> {
    let obstacle_s = (ob.s_rear + ob.s_front) / 2.0;
    let lane = world.route_lane_at(obstacle_s).and_then(|sp| world.lane(&sp.lane_id))?;
    if lane.in_junction {
        return None;
    }
    for left in [true, false] {
        let Some(neighbor) = lane.neighbor(left).and_then(|id| world.lane(id)) else {
            continue;
        };
        if neighbor.direction_flag != lane.direction_flag || lane.marking(left) != crate::world::Marking::Broken {
            continue;
        }
        let ob_on_n = neighbor.centerline.project(ob.actor.pose.position())?;
        if !ob_on_n.interior || ob_on_n.s + 15.0 > neighbor.centerline.length() {
            continue;
        }
        let ego_on_n = neighbor.centerline.project(world.ego.pose.position())?;
        let clear = world.actors.iter().filter(|a| a.id != ob.actor.id).all(|a| {
            match hit(&neighbor.centerline, neighbor.width, a) {
                Some(h) if h.in_lane => h.s_front < ego_on_n.s - 20.0 || h.s_rear > ob_on_n.s + 20.0,
                _ => true,
            }
        });
        if clear {
            return Some(if left { RecoveryDirection::Left } else { RecoveryDirection::Right });
        }
    }
    None
}

fn lane_lateral(world: &WorldState, ep: &EgoPath, ood: &OodStatus, cfg: &ExpertConfig) -> ExpertDecision {
    let dir = ood.recovery_direction;
    let route = EgoPath {
        path: world.ego.route.clone(),
        s: world.ego.route_progress,
        on_route: true,
        lane_width: ep.lane_width,
    };
    let route_front = route.front_s(world);
    let route_rear = route.rear_s(world);
    let route_hits: Vec<PathHit> = world
        .actors
        .iter()
        .filter_map(|a| hit(&route.path, route.lane_width, a))
        .filter(|h| h.in_lane)
        .collect();

    let circumventing = route_hits.iter().find(|h| {
        is_blockage(h) && h.s_front > route_rear - 6.0 && h.s_rear < route_front + cfg.obstacle_lookahead
    });
    if let Some(ob) = circumventing {
        let speed = speed_plan(world, ep, cfg, None, false);
        return compose(
            DirectionKey::FollowLane,
            speed,
            format!(
                "The ego vehicle is circumventing {}, so it postpones returning to the {} lane until it has passed it.",
                ob.actor.tag(),
                dir.word()
            ),
        );
    }
    let postpone = |cause: Cause, why: String| {
        let mut speed = speed_plan(world, ep, cfg, None, false);
        if speed.key.severity_rank() > SpeedKey::Decelerate.severity_rank() {
            speed = Bound {
                key: SpeedKey::Decelerate,
                cause,
                text: "It slows down while waiting.".into(),
            };
        }
        compose(
            DirectionKey::FollowLane,
            speed,
            format!("The ego vehicle should return to the {} lane but {why}, so the lane change is postponed.", dir.word()),
        )
    };
    let ego_pos = world.ego.pose.position();
    if let Some(em) = world
        .actors
        .iter()
        .find(|a| a.emergency && a.pose.position().dist(ego_pos) <= 50.0)
    {
        return postpone(Cause::Emergency, format!("it must yield to the emergency vehicle {}", em.tag()));
    }
    if let Some(side) = route_hits
        .iter()
        .find(|h| h.s_front > route.s - 12.0 && h.s_rear < route.s + 10.0)
    {
        return postpone(
            Cause::SideTraffic,
            format!("{} occupies the target lane next to it", side.actor.tag()),
        );
    }
    let mut speed = speed_plan(world, ep, cfg, None, false);
    if speed.key == SpeedKey::Accelerate {
        speed.key = SpeedKey::Keep;
        speed.text = "It keeps its speed during the lane change.".into();
    }
    let direction = change_lane(dir);
    compose(
        direction,
        speed,
        format!(
            "The ego vehicle is not in its route lane and the {} lane is clear, so it should {}.",
            dir.word(),
            direction.describe()
        ),
    )
}

/// Response to a point the ego must stop at, `d` meters ahead of the front bumper.
fn stop_target(d: f64, v: f64) -> Option<SpeedKey> {
    let threshold = v * v / 8.0 + 0.5 * v + 5.0;
    if d <= threshold || (v < 0.5 && d <= 10.0) {
        Some(SpeedKey::Stop)
    } else if d <= threshold + 15.0 {
        Some(if v > 4.0 {
            SpeedKey::Decelerate
        } else if v < 2.0 {
            SpeedKey::Accelerate
        } else {
            SpeedKey::Keep
        })
    } else {
        None
    }
}

fn speed_plan(
    world: &WorldState,
    ep: &EgoPath,
    cfg: &ExpertConfig,
    extra_cap: Option<(f64, Cause)>,
    obstacle_handled: bool,
) -> Bound {
    let v = world.ego.speed;
    let front = ep.front_s(world);
    let mut bounds: Vec<Bound> = Vec::new();

    // cruising target
    let limit = world.effective_speed_limit();
    let mut cap = (limit, Cause::SpeedLimit);
    if ep.on_route {
        for c in world.controls.iter().filter(|c| c.kind == ControlKind::SpeedLimitSign && c.affects_ego) {
            if let (Some(s), Some(val)) = (world.control_route_s(c), c.value) {
                if s > front && s - front <= 30.0 && val < cap.0 {
                    cap = (val, Cause::SpeedLimit);
                }
            }
        }
    }
    if let Some(extra) = extra_cap {
        if extra.0 < cap.0 {
            cap = extra;
        }
    }
    let cap_text = match cap.1 {
        Cause::SpeedLimit => format!("the speed limit of {:.0} km/h", kmh(cap.0)),
        _ => format!("a safe speed of {:.0} km/h", kmh(cap.0)),
    };
    bounds.push(if v < cap.0 - 1.0 {
        Bound {
            key: SpeedKey::Accelerate,
            cause: Cause::Clear,
            text: format!("The road ahead is clear and the ego vehicle is below {cap_text}, so it can accelerate."),
        }
    } else if v > cap.0 + 0.5 {
        Bound {
            key: SpeedKey::Decelerate,
            cause: cap.1,
            text: format!("The ego vehicle is faster than {cap_text}, so it should decelerate."),
        }
    } else {
        Bound {
            key: SpeedKey::Keep,
            cause: Cause::Clear,
            text: format!("The road ahead is clear and the ego vehicle is driving at {cap_text}, so it keeps its speed."),
        }
    });

    // lights and stop signs on the route
    if ep.on_route {
        for c in &world.controls {
            if !c.affects_ego {
                continue;
            }
            let Some(s) = world.control_route_s(c) else { continue };
            let d = s - front;
            if !(-0.5..=60.0).contains(&d) {
                continue;
            }
            let (cause, text) = match (c.kind, c.state) {
                (ControlKind::TrafficLight, Some(LightState::Red)) => {
                    (Cause::RedLight, format!("The traffic light {} is red {:.0} m ahead", c.tag(), d.max(0.0)))
                }
                (ControlKind::TrafficLight, Some(LightState::Yellow)) if d >= v * v / 16.0 + 0.5 * v => (
                    Cause::YellowLight,
                    format!("The traffic light {} is turning red {:.0} m ahead", c.tag(), d.max(0.0)),
                ),
                (ControlKind::StopSign, _) if !world.ego.cleared_stops.contains(&c.id) => (
                    Cause::StopSign,
                    format!("The stop sign {} requires a full stop {:.0} m ahead", c.tag(), d.max(0.0)),
                ),
                _ => continue,
            };
            if let Some(key) = stop_target(d, v) {
                bounds.push(Bound { key, cause, text: stop_text(text, key) });
            }
        }
    }

    // traffic in the ego lane
    let hits = in_lane_ahead(world, ep, 60.0);
    let mut handled: Vec<&str> = Vec::new();
    if let Some(ob) = hits.iter().find(|h| is_blockage(h) && h.s_rear >= front - 0.5) {
        handled.push(&ob.actor.id);
        if !obstacle_handled {
            let d = ob.s_rear - front - 3.0;
            if let Some(key) = stop_target(d, v) {
                let text = format!("The obstacle {} blocks the ego lane {:.0} m ahead", ob.actor.tag(), (ob.s_rear - front).max(0.0));
                bounds.push(Bound { key, cause: Cause::Obstacle, text: stop_text(text, key) });
            }
        }
    }
    for ped in hits
        .iter()
        .filter(|h| h.actor.kind == crate::world::ActorKind::Pedestrian && h.s_rear >= front - 0.5)
    {
        handled.push(&ped.actor.id);
        let d = ped.s_rear - front - 3.0;
        if let Some(key) = stop_target(d, v) {
            let text = format!("The pedestrian {} is crossing the ego lane {:.0} m ahead", ped.actor.tag(), (ped.s_rear - front).max(0.0));
            bounds.push(Bound { key, cause: Cause::Crossing, text: stop_text(text, key) });
        }
    }
    if let Some(lead) = hits.iter().find(|h| {
        !is_blockage(h) && h.is_same_direction() && h.actor.kind != crate::world::ActorKind::Pedestrian && h.s_rear >= front - 0.5
    }) {
        handled.push(&lead.actor.id);
        let gap = lead.s_rear - front;
        let headway = gap / v.max(0.1);
        let closing = v - lead.actor.speed * lead.heading_diff.cos();
        let ttc = if closing > 0.1 { gap / closing } else { f64::INFINITY };
        let key = if gap < 4.0 || headway < cfg.headway_stop {
            Some(SpeedKey::Stop)
        } else if headway < cfg.headway_brake || ttc < 4.0 {
            Some(SpeedKey::Decelerate)
        } else if headway <= cfg.headway_follow || ttc < 8.0 {
            Some(SpeedKey::Keep)
        } else {
            None
        };
        if let Some(key) = key {
            let text = format!(
                "The vehicle ahead {} is {:.0} m away with a time headway of {:.1} s, so the ego vehicle should {}.",
                lead.actor.tag(),
                gap.max(0.0),
                headway.min(99.0),
                key.describe()
            );
            bounds.push(Bound { key, cause: Cause::LeadVehicle, text });
        }
    }
    let rear = ep.rear_s(world);
    if let Some(inv) = hits.iter().find(|h| {
        h.is_oncoming() && !h.is_stopped() && h.s_front > rear - 1.0 && h.s_rear < front + cfg.obstacle_lookahead
    }) {
        handled.push(&inv.actor.id);
        let key = if v > 3.0 { SpeedKey::Decelerate } else { SpeedKey::Keep };
        bounds.push(Bound {
            key,
            cause: Cause::Oncoming,
            text: format!("The oncoming vehicle {} is partly in the ego lane, so the ego vehicle should {}.", inv.actor.tag(), key.describe()),
        });
    }

    // other moving actors whose predicted path crosses the route
    let ego = world.ego.pose;
    for a in &world.actors {
        if handled.contains(&a.id.as_str()) || a.speed < 0.5 {
            continue;
        }
        let (lon, _) = ego.to_local(a.pose.position());
        if lon <= 0.0 || a.pose.position().dist(ego.position()) > 25.0 {
            continue;
        }
        if is_dangerous(world, a, cfg) {
            let key = if v > 2.0 { SpeedKey::Decelerate } else { SpeedKey::Keep };
            bounds.push(Bound {
                key,
                cause: Cause::Crossing,
                text: format!("{} is crossing the ego route, so the ego vehicle should {}.", a.tag(), key.describe()),
            });
        }
    }

    let mut best = bounds.remove(0);
    for b in bounds {
        // equal keys: a specific reason beats the generic cruising text
        let specific = b.key == best.key && best.cause == Cause::Clear;
        if b.key.severity_rank() < best.key.severity_rank() || specific {
            best = b;
        }
    }
    best
}

fn stop_text(what: String, key: SpeedKey) -> String {
    match key {
        SpeedKey::Stop => format!("{what}, so the ego vehicle must stop."),
        SpeedKey::Decelerate => format!("{what}, so the ego vehicle should decelerate."),
        SpeedKey::Accelerate => format!("{what}, so the ego vehicle creeps forward to the stop position."),
        SpeedKey::Keep => format!("{what}, so the ego vehicle keeps a low approach speed."),
    }
}
