//! Bundled fixtures: the case-house graph, both palettes, and the site boundaries.

use crate::plangen::SiteBoundary;
use crate::topology::{Palette, TopologyGraph};

pub const CASE_HOUSE_JSON: &str = include_str!("../fixtures/case_house.json");
pub const RGB_PALETTE_JSON: &str = include_str!("../fixtures/palette_rgb.json");
pub const GREY_PALETTE_JSON: &str = include_str!("../fixtures/palette_grey.json");

/// Side length of the fixture cell grid.
pub const GRID: usize = 64;

pub fn case_house() -> TopologyGraph {
    TopologyGraph::from_json(CASE_HOUSE_JSON).expect("bundled graph parses")
}

pub fn rgb_palette() -> Palette {
    Palette::from_json(RGB_PALETTE_JSON).expect("bundled palette parses")
}

pub fn grey_palette() -> Palette {
    Palette::from_json(GREY_PALETTE_JSON).expect("bundled palette parses")
}

/// 60x60 rectangle centred in the 64x64 grid.
pub fn rect_boundary() -> SiteBoundary {
    SiteBoundary::from_fn(GRID, GRID, |x, y| (2..62).contains(&x) && (2..62).contains(&y))
}

/// The rectangle with its upper-right 20x20 corner removed.
pub fn notch_corner_boundary() -> SiteBoundary {
    SiteBoundary::from_fn(GRID, GRID, |x, y| {
        (2..62).contains(&x) && (2..62).contains(&y) && !(x >= 42 && y < 22)
    })
}

/// The rectangle with a 16-wide, 14-deep notch cut into the middle of its bottom side.
pub fn notch_side_boundary() -> SiteBoundary {
    SiteBoundary::from_fn(GRID, GRID, |x, y| {
        (2..62).contains(&x) && (2..62).contains(&y) && !((24..40).contains(&x) && y >= 48)
    })
}

pub fn boundary_by_name(name: &str) -> Option<SiteBoundary> {
    match name {
        "rect" => Some(rect_boundary()),
        "notch_corner" => Some(notch_corner_boundary()),
        "notch_side" => Some(notch_side_boundary()),
        _ => None,
    }
}

pub const BOUNDARY_NAMES: [&str; 3] = ["rect", "notch_corner", "notch_side"];
