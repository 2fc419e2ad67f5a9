use serde::{Deserialize, Serialize};

use super::font::{draw_text, text_size};
use super::raster::RgbImage;
use crate::dynamics::VehicleGeometry;
use crate::fleet::{FleetSnapshot, Stage};
use crate::geometry::Bounds;
use crate::road::LaneGraph;

pub const BACKGROUND: [u8; 3] = [30, 30, 30];
pub const ROAD: [u8; 3] = [110, 110, 110];
pub const CENTERLINE: [u8; 3] = [200, 200, 200];
pub const REQUEST: [u8; 3] = [220, 30, 30];
pub const FREE_VEHICLE: [u8; 3] = [40, 180, 60];
pub const OCCUPIED_VEHICLE: [u8; 3] = [240, 200, 20];
pub const PLANNER_VEHICLE: [u8; 3] = [135, 206, 235];
pub const MARKING: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevStyle {
    pub pixels_per_meter: f64,
    pub width: u32,
    pub height: u32,
    /// World coordinates of the canvas' bottom-left corner.
    pub origin: [f64; 2],
    pub vehicle: VehicleGeometry,
    /// Side of the request square, m.
    pub request_size: f64,
    pub label_scale: u32,
}

impl BevStyle {
    /// Canvas covering `bounds` plus `margin` metres on every side.
    pub fn covering(bounds: Bounds, pixels_per_meter: f64, margin: f64) -> Self {
        assert!(pixels_per_meter > 0.0, "pixels per meter must be positive");
        let b = bounds.expanded(margin);
        Self {
            pixels_per_meter,
            width: ((b.max_x - b.min_x) * pixels_per_meter).ceil().max(1.0) as u32,
            height: ((b.max_y - b.min_y) * pixels_per_meter).ceil().max(1.0) as u32,
            origin: [b.min_x, b.min_y],
            vehicle: VehicleGeometry::default(),
            request_size: 2.5,
            label_scale: 2,
        }
    }

    /// Continuous pixel coordinates (column, row); pixel `(c, r)` spans
    /// `[c, c+1) × [r, r+1)`.
    pub fn world_to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.origin[0]) * self.pixels_per_meter,
            self.height as f64 - (p[1] - self.origin[1]) * self.pixels_per_meter,
        ]
    }

    pub fn pixel_to_world(&self, px: [f64; 2]) -> [f64; 2] {
        [
            px[0] / self.pixels_per_meter + self.origin[0],
            (self.height as f64 - px[1]) / self.pixels_per_meter + self.origin[1],
        ]
    }

    fn contains_pixel(&self, px: [f64; 2]) -> bool {
        px[0] >= 0.0 && px[1] >= 0.0 && px[0] <= self.width as f64 && px[1] <= self.height as f64
    }

    fn clamp_pixel(&self, px: [f64; 2]) -> [f64; 2] {
        [px[0].clamp(0.0, self.width as f64), px[1].clamp(0.0, self.height as f64)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectKind {
    Request,
    FreeVehicle,
    OccupiedVehicle,
    PlannerVehicle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub kind: ObjectKind,
    pub id: u32,
    pub world: [f64; 2],
    /// Pixel anchor of the object centre (after clamping).
    pub pixel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevImage {
    pub raster: RgbImage,
    pub legend: Vec<LegendEntry>,
    /// Some object lay outside the canvas and was drawn on its border.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevView {
    /// Requests plus free/occupied vehicles.
    Dispatch,
    /// Busy vehicles highlighted for the planner; no requests.
    Planner,
}

/// Annotated bird's-eye view used as dispatcher context.
pub fn render_bev(snapshot: &FleetSnapshot, graph: &LaneGraph, style: &BevStyle) -> BevImage {
    render_view(snapshot, graph, style, BevView::Dispatch)
}

pub fn render_view(snapshot: &FleetSnapshot, graph: &LaneGraph, style: &BevStyle, view: BevView) -> BevImage {
    let mut img = RgbImage::new(style.width, style.height, BACKGROUND);
    draw_roads(&mut img, graph, style);
    let mut legend = Vec::new();
    let mut clamped = false;

    if view == BevView::Dispatch {
        for r in snapshot.pending_requests() {
            let (px, c) = anchor(style, r.pickup);
            clamped |= c;
            let h = style.request_size * style.pixels_per_meter / 2.0;
            img.fill_convex(
                &[[px[0] - h, px[1] - h], [px[0] + h, px[1] - h], [px[0] + h, px[1] + h], [px[0] - h, px[1] + h]],
                REQUEST,
            );
            label(&mut img, style, px, h, &format!("R{}", r.id.0));
            legend.push(LegendEntry {
                kind: ObjectKind::Request,
                id: r.id.0,
                world: r.pickup,
                pixel: px,
            });
        }
    }

    for v in snapshot.vehicles.values() {
        let z = snapshot.states[&v.id];
        let kind = match (view, v.stage) {
            (BevView::Planner, Stage::Idle) | (BevView::Dispatch, Stage::Idle) => ObjectKind::FreeVehicle,
            (BevView::Planner, _) => ObjectKind::PlannerVehicle,
            (BevView::Dispatch, _) => ObjectKind::OccupiedVehicle,
        };
        let color = match kind {
            ObjectKind::FreeVehicle => FREE_VEHICLE,
            ObjectKind::OccupiedVehicle => OCCUPIED_VEHICLE,
            _ => PLANNER_VEHICLE,
        };
        let (px, c) = anchor(style, z.position());
        clamped |= c;
        let ppm = style.pixels_per_meter;
        let (hl, hw) = (style.vehicle.length * ppm / 2.0, style.vehicle.width * ppm / 2.0);
        // Raster rows grow downwards, so the heading's y component flips.
        let f = [z.heading.cos(), -z.heading.sin()];
        let n = [-f[1], f[0]];
        let corner = |a: f64, b: f64| [px[0] + f[0] * a + n[0] * b, px[1] + f[1] * a + n[1] * b];
        img.fill_convex(&[corner(hl, hw), corner(hl, -hw), corner(-hl, -hw), corner(-hl, hw)], color);
        let (gap, tip, half) = (0.25 * ppm, style.vehicle.length * ppm, 0.4 * style.vehicle.width * ppm);
        img.fill_convex(
            &[corner(hl + gap, half), corner(hl + gap, -half), corner(hl + tip, 0.0)],
            MARKING,
        );
        label(&mut img, style, px, hl.max(hw), &format!("V{}", v.id.0));
        legend.push(LegendEntry {
            kind,
            id: v.id.0,
            world: z.position(),
            pixel: px,
        });
    }
    BevImage {
        raster: img,
        legend,
        clamped,
    }
}

fn anchor(style: &BevStyle, world: [f64; 2]) -> ([f64; 2], bool) {
    let px = style.world_to_pixel(world);
    if style.contains_pixel(px) {
        (px, false)
    } else {
        log::warn!("object at ({:.1}, {:.1}) lies outside the BEV canvas", world[0], world[1]);
        (style.clamp_pixel(px), true)
    }
}

/// Label centred horizontally, just above an object of the given pixel extent.
fn label(img: &mut RgbImage, style: &BevStyle, px: [f64; 2], extent: f64, text: &str) {
    let (w, h) = text_size(text, style.label_scale);
    let col = (px[0] - w as f64 / 2.0).round() as i64;
    let row = (px[1] - extent - 2.0 - h as f64).round() as i64;
    draw_text(img, col, row, text, style.label_scale, MARKING);
}

fn draw_roads(img: &mut RgbImage, graph: &LaneGraph, style: &BevStyle) {
    let ppm = style.pixels_per_meter;
    for lane in graph.lanes() {
        for w in lane.centerline.windows(2) {
            let (a, b) = (style.world_to_pixel(w[0]), style.world_to_pixel(w[1]));
            img.draw_segment(a, b, lane.width * ppm, ROAD);
        }
    }
    for lane in graph.lanes() {
        for w in lane.centerline.windows(2) {
            let (a, b) = (style.world_to_pixel(w[0]), style.world_to_pixel(w[1]));
            img.draw_segment(a, b, 1.0, CENTERLINE);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;
    use crate::fleet::{VehicleId, VehicleRecord};
    use crate::road::{build_lane_graph, synthetic};

    #[test]
    fn pixel_transform_round_trips() {
        let mut b = Bounds::empty();
        b.include([-10.0, -5.0]);
        b.include([40.0, 25.0]);
        let style = BevStyle::covering(b, 4.0, 5.0);
        assert_eq!((style.width, style.height), (240, 160));
        let p = [12.3, -1.7];
        let back = style.pixel_to_world(style.world_to_pixel(p));
        assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
        // +y in the world points up in the raster.
        assert!(style.world_to_pixel([0.0, 10.0])[1] < style.world_to_pixel([0.0, 0.0])[1]);
    }

    #[test]
    fn far_objects_are_clamped() {
        let graph = build_lane_graph(&synthetic::straight_road(40.0, 2.0)).unwrap();
        let style = BevStyle::covering(graph.bounds(), 3.0, 10.0);
        let mut snap = FleetSnapshot::default();
        snap.vehicles.insert(VehicleId(0), VehicleRecord::idle(VehicleId(0), 0.0));
        snap.states.insert(VehicleId(0), VehicleState::new(500.0, 0.0, 0.0, 0.0));
        let img = render_bev(&snap, &graph, &style);
        assert!(img.clamped);
        assert_eq!(img.legend[0].pixel[0], style.width as f64);
    }
}
