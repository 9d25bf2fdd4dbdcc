//! Ego-centred top-down raster. The ego points up; the right of the image is
//! the ego's right.

use std::collections::BTreeMap;
use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Polyline, Pose};
use crate::world::{ActorId, ActorKind, ControlKind, LightState, Marking, WorldState};

use super::font::{draw_text, text_width};

pub const EGO_LABEL: &str = "the ego vehicle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BevOptions {
    pub size: u32,
    pub meters_per_pixel: f64,
    /// Fraction of the image height above the ego.
    pub ego_row: f64,
    pub trails: bool,
    pub trail_seconds: f64,
    pub labels: bool,
}

impl Default for BevOptions {
    fn default() -> Self {
        Self {
            size: 384,
            meters_per_pixel: 0.25,
            ego_row: 0.65,
            trails: false,
            trail_seconds: 2.0,
            labels: true,
        }
    }
}

impl BevOptions {
    pub fn with_trails(mut self) -> Self {
        self.trails = true;
        self
    }
}

/// What a raster will contain, decided before any pixel is drawn.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BevScene {
    pub lanes: Vec<String>,
    pub actors: Vec<ActorId>,
    pub controls: Vec<String>,
    pub trails: BTreeMap<ActorId, Vec<Point>>,
    pub labels: Vec<String>,
}

const BACKGROUND: Rgb<u8> = Rgb([28, 30, 34]);
const ROAD: Rgb<u8> = Rgb([78, 80, 86]);
const SOLID: Rgb<u8> = Rgb([235, 235, 235]);
const BROKEN: Rgb<u8> = Rgb([200, 200, 200]);
const EGO: Rgb<u8> = Rgb([40, 110, 255]);
const PEDESTRIAN: Rgb<u8> = Rgb([0, 230, 230]);
const LABEL: Rgb<u8> = Rgb([255, 255, 255]);
const BORDER: Rgb<u8> = Rgb([150, 210, 255]);
const SIGN_DOT: Rgb<u8> = Rgb([255, 220, 0]);

struct View {
    ego: Pose,
    mpp: f64,
    cx: f64,
    cy: f64,
    size: u32,
}

impl View {
    fn new(world: &WorldState, o: &BevOptions) -> Self {
        Self {
            ego: world.ego.pose,
            mpp: o.meters_per_pixel,
            cx: o.size as f64 / 2.0,
            cy: o.size as f64 * o.ego_row,
            size: o.size,
        }
    }

    fn px(&self, p: Point) -> (f64, f64) {
        let (lon, lat) = self.ego.to_local(p);
        (self.cx + lat / self.mpp, self.cy - lon / self.mpp)
    }

    fn visible(&self, p: Point, margin_px: f64) -> bool {
        let (x, y) = self.px(p);
        let s = self.size as f64;
        x >= -margin_px && y >= -margin_px && x <= s + margin_px && y <= s + margin_px
    }
}

pub fn bev_scene(world: &WorldState, options: &BevOptions) -> BevScene {
    let view = View::new(world, options);
    let mut scene = BevScene::default();
    for lane in &world.lane_graph.lanes {
        let pts = lane.centerline.sample(0.0, lane.centerline.length(), 2.0);
        if pts.iter().any(|p| view.visible(*p, 20.0)) {
            scene.lanes.push(lane.id.clone());
        }
    }
    for actor in &world.actors {
        if view.visible(actor.pose.position(), 10.0) {
            scene.actors.push(actor.id.clone());
            if options.labels {
                scene.labels.push(actor.id.clone());
            }
            if options.trails {
                let trail: Vec<Point> = world
                    .trail(&actor.id, options.trail_seconds)
                    .iter()
                    .map(|a| a.position)
                    .collect();
                if !trail.is_empty() {
                    scene.trails.insert(actor.id.clone(), trail);
                }
            }
        }
    }
    for c in &world.controls {
        if c.affects_ego && view.visible(c.pose.position(), 10.0) {
            scene.controls.push(c.id.clone());
        }
    }
    if options.labels {
        scene.labels.push(EGO_LABEL.to_string());
    }
    scene
}

pub fn render_bev(world: &WorldState, options: &BevOptions) -> RgbImage {
    let scene = bev_scene(world, options);
    let view = View::new(world, options);
    let mut img = RgbImage::from_pixel(options.size, options.size, BACKGROUND);

    for id in &scene.lanes {
        let lane = world.lane(id).unwrap();
        draw_strip(&mut img, &view, &lane.centerline, lane.width, ROAD);
    }
    for id in &scene.lanes {
        let lane = world.lane(id).unwrap();
        for left in [true, false] {
            let offset = if left { -lane.width / 2.0 } else { lane.width / 2.0 };
            let edge = lane.centerline.offset(offset);
            match lane.marking(left) {
                Marking::Solid => draw_path(&mut img, &view, &edge, SOLID, None),
                Marking::Broken => draw_path(&mut img, &view, &edge, BROKEN, Some((3.0, 3.0))),
                Marking::None => {}
            }
        }
    }
    for (id, trail) in &scene.trails {
        let actor = world.actor(id).unwrap();
        let color = dim(actor_color(&actor.color));
        let mut pts = trail.clone();
        pts.push(actor.pose.position());
        for w in pts.windows(2) {
            draw_line(&mut img, view.px(w[0]), view.px(w[1]), color);
        }
        for p in trail {
            let (x, y) = view.px(*p);
            fill_disc(&mut img, x, y, 1.5, color);
        }
    }
    for id in &scene.controls {
        let c = world.control(id).unwrap();
        let (x, y) = view.px(c.pose.position());
        match c.kind {
            ControlKind::TrafficLight => {
                let color = match c.state {
                    Some(LightState::Red) => Rgb([230, 30, 30]),
                    Some(LightState::Yellow) => Rgb([240, 200, 0]),
                    _ => Rgb([30, 200, 60]),
                };
                fill_disc(&mut img, x, y, 5.0, Rgb([10, 10, 10]));
                fill_disc(&mut img, x, y, 3.5, color);
            }
            ControlKind::StopSign => {
                fill_disc(&mut img, x, y, 7.0, Rgb([200, 20, 20]));
                draw_text(&mut img, x as i64 - 7, y as i64 - 2, "STOP", LABEL);
            }
            ControlKind::SpeedLimitSign => {
                let kmh = format!("{:.0}", c.value.unwrap_or(0.0) * 3.6);
                fill_disc(&mut img, x, y, 7.0, Rgb([200, 20, 20]));
                fill_disc(&mut img, x, y, 5.5, Rgb([245, 245, 245]));
                let w = text_width(&kmh) as i64;
                draw_text(&mut img, x as i64 - w / 2, y as i64 - 2, &kmh, Rgb([0, 0, 0]));
            }
            ControlKind::YieldSign
            | ControlKind::ConstructionWarning
            | ControlKind::ConstructionCone => {
                fill_disc(&mut img, x, y, 3.5, SIGN_DOT);
                if options.labels {
                    draw_text(&mut img, x as i64 + 6, y as i64 - 2, &c.tag(), LABEL);
                }
            }
        }
    }
    for id in &scene.actors {
        let a = world.actor(id).unwrap();
        let corners: Vec<(f64, f64)> = a.footprint().corners().iter().map(|p| view.px(*p)).collect();
        let outline = BORDER;
        match a.kind {
            ActorKind::Pedestrian => {
                let (x, y) = view.px(a.pose.position());
                draw_box(&mut img, x - 3.0, y - 3.0, x + 3.0, y + 3.0, PEDESTRIAN);
            }
            _ => {
                fill_polygon(&mut img, &corners, actor_color(&a.color));
                for i in 0..4 {
                    draw_line(&mut img, corners[i], corners[(i + 1) % 4], outline);
                }
                if a.kind.is_road_user() {
                    draw_arrow(&mut img, &view, a.pose, a.bbox.length, outline);
                }
            }
        }
    }
    let ego_corners: Vec<(f64, f64)> =
        world.ego.footprint().corners().iter().map(|p| view.px(*p)).collect();
    fill_polygon(&mut img, &ego_corners, EGO);
    draw_arrow(&mut img, &view, world.ego.pose, world.ego.bbox.length, LABEL);

    if options.labels {
        for id in &scene.actors {
            let a = world.actor(id).unwrap();
            let (x, y) = view.px(a.pose.position());
            let text = format!("{} {}", a.tag(), a.name);
            let w = text_width(&text) as i64;
            draw_text(&mut img, x as i64 - w / 2, y as i64 - 14, &text, LABEL);
        }
        let (x, y) = view.px(world.ego.pose.position());
        let w = text_width(EGO_LABEL) as i64;
        draw_text(&mut img, x as i64 - w / 2, y as i64 + 14, EGO_LABEL, EGO);
    }
    img
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("in-memory PNG encoding");
    buf.into_inner()
}

fn actor_color(name: &str) -> Rgb<u8> {
    match name {
        "red" => Rgb([200, 40, 40]),
        "black" => Rgb([20, 20, 20]),
        "white" => Rgb([240, 240, 240]),
        "silver" | "gray" | "grey" => Rgb([170, 170, 175]),
        "blue" => Rgb([60, 90, 200]),
        "green" => Rgb([40, 160, 70]),
        "yellow" => Rgb([230, 200, 40]),
        _ => Rgb([230, 120, 30]),
    }
}

fn dim(c: Rgb<u8>) -> Rgb<u8> {
    Rgb([c[0] / 2 + 40, c[1] / 2 + 40, c[2] / 2 + 40])
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let s = img.width() as f64 * 4.0;
    if a.0.abs().max(a.1.abs()).max(b.0.abs()).max(b.1.abs()) > s {
        // far off-canvas endpoints: clip coarsely by shortening
        let (a, b) = clip_segment(a, b, img.width() as f64);
        if let (Some(a), Some(b)) = (a, b) {
            draw_line(img, a, b, c);
        }
        return;
    }
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(img, (a.0 + (b.0 - a.0) * t).floor() as i64, (a.1 + (b.1 - a.1) * t).floor() as i64, c);
    }
}

/// Liang-Barsky clip against a square canvas with a margin.
fn clip_segment(a: (f64, f64), b: (f64, f64), size: f64) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
    let (lo, hi) = (-2.0, size + 2.0);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [(-dx, a.0 - lo), (dx, hi - a.0), (-dy, a.1 - lo), (dy, hi - a.1)] {
        if p == 0.0 {
            if q < 0.0 {
                return (None, None);
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return (None, None);
    }
    (
        Some((a.0 + dx * t0, a.1 + dy * t0)),
        Some((a.0 + dx * t1, a.1 + dy * t1)),
    )
}

fn draw_path(img: &mut RgbImage, view: &View, path: &Polyline, c: Rgb<u8>, dash: Option<(f64, f64)>) {
    match dash {
        None => {
            for w in path.points().windows(2) {
                draw_line(img, view.px(w[0]), view.px(w[1]), c);
            }
        }
        Some((on, off)) => {
            let mut s = 0.0;
            let len = path.length();
            while s < len {
                let end = (s + on).min(len);
                let seg = path.slice(s, end);
                for w in seg.points().windows(2) {
                    draw_line(img, view.px(w[0]), view.px(w[1]), c);
                }
                s += on + off;
            }
        }
    }
}

fn draw_strip(img: &mut RgbImage, view: &View, centerline: &Polyline, width: f64, c: Rgb<u8>) {
    let pts = centerline.points();
    let hw = width / 2.0;
    for (i, w) in pts.windows(2).enumerate() {
        let n = Point::right_of(w[1].sub(w[0]).heading());
        let quad = [
            view.px(w[0].sub(n.scale(hw))),
            view.px(w[1].sub(n.scale(hw))),
            view.px(w[1].add(n.scale(hw))),
            view.px(w[0].add(n.scale(hw))),
        ];
        fill_polygon(img, &quad, c);
        if i > 0 {
            let (x, y) = view.px(w[0]);
            fill_disc(img, x, y, hw / view.mpp, c);
        }
    }
}

fn draw_arrow(img: &mut RgbImage, view: &View, pose: Pose, length: f64, c: Rgb<u8>) {
    let f = pose.forward();
    let r = Point::right_of(pose.heading);
    let tip = pose.position().add(f.scale(length / 2.0));
    let tail = pose.position().sub(f.scale(length / 4.0));
    let wing = length / 6.0;
    draw_line(img, view.px(tail), view.px(tip), c);
    let back = tip.sub(f.scale(wing));
    draw_line(img, view.px(tip), view.px(back.add(r.scale(wing))), c);
    draw_line(img, view.px(tip), view.px(back.sub(r.scale(wing))), c);
}

fn draw_box(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, c: Rgb<u8>) {
    draw_line(img, (x0, y0), (x1, y0), c);
    draw_line(img, (x1, y0), (x1, y1), c);
    draw_line(img, (x1, y1), (x0, y1), c);
    draw_line(img, (x0, y1), (x0, y0), c);
}

fn fill_disc(img: &mut RgbImage, cx: f64, cy: f64, r: f64, c: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let y0 = ((cy - r).floor() as i64).max(0);
    let y1 = ((cy + r).ceil() as i64).min(h - 1);
    let x0 = ((cx - r).floor() as i64).max(0);
    let x1 = ((cx + r).ceil() as i64).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x as u32, y as u32, c);
            }
        }
    }
}

/// Scanline fill sampling pixel centres.
fn fill_polygon(img: &mut RgbImage, pts: &[(f64, f64)], c: Rgb<u8>) {
    if pts.len() < 3 {
        return;
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let y0 = (ymin.floor() as i64).max(0);
    let y1 = (ymax.ceil() as i64).min(h - 1);
    let mut xs = Vec::with_capacity(pts.len());
    for y in y0..=y1 {
        let yc = y as f64 + 0.5;
        xs.clear();
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            if (a.1 <= yc && b.1 > yc) || (b.1 <= yc && a.1 > yc) {
                xs.push(a.0 + (yc - a.1) / (b.1 - a.1) * (b.0 - a.0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks(2) {
            if let [xa, xb] = pair {
                let xa = ((xa - 0.5).ceil() as i64).max(0);
                let xb = ((xb - 0.5).floor() as i64).min(w - 1);
                for x in xa..=xb {
                    img.put_pixel(x as u32, y as u32, c);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{bundled_scenario, load_scenario, step, VehicleControl, DEFAULT_DT};

    const ROAD_ONLY: &str = r#"
version = 1
name = "Empty"
[[lane]]
id = "a"
centerline = [[0.0, 0.0], [100.0, 0.0]]
left_marking = "solid"
right_marking = "broken"
[ego]
lane = "a"
s = 20.0
route = ["a"]
"#;

    #[test]
    fn empty_world_has_road_and_ego_only() {
        let w = load_scenario(ROAD_ONLY, 0).unwrap();
        let scene = bev_scene(&w, &BevOptions::default());
        assert_eq!(scene.lanes, vec!["a".to_string()]);
        assert!(scene.actors.is_empty() && scene.controls.is_empty());
        let img = render_bev(&w, &BevOptions::default());
        assert!(img.pixels().any(|p| *p == ROAD));
        assert!(img.pixels().any(|p| *p == BACKGROUND));
    }

    #[test]
    fn non_affecting_sign_is_not_drawn() {
        let w = bundled_scenario("ObstacleAhead", 0).unwrap();
        let scene = bev_scene(&w, &BevOptions::default());
        assert!(!scene.controls.contains(&"yield".to_string()));
        let mut without = w.clone();
        without.controls.retain(|c| c.id != "yield");
        assert_eq!(render_bev(&w, &BevOptions::default()), render_bev(&without, &BevOptions::default()));
    }

    #[test]
    fn trail_after_one_and_a_half_seconds() {
        let mut w = bundled_scenario("FollowLeadVehicle", 0).unwrap();
        for _ in 0..15 {
            w = step(&w, &VehicleControl::default(), DEFAULT_DT);
        }
        let o = BevOptions { trail_seconds: 1.5, ..BevOptions::default() }.with_trails();
        let scene = bev_scene(&w, &o);
        assert_eq!(scene.trails["lead"].len(), 3);
    }

    #[test]
    fn png_round_trip() {
        let w = bundled_scenario("RedLightJunctionTurn", 0).unwrap();
        let img = render_bev(&w, &BevOptions::default());
        let bytes = encode_png(&img);
        let back = image::load_from_memory(&bytes).unwrap().to_rgb8();
        assert_eq!(back, img);
    }
}
