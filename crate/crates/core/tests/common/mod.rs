#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use topobench::extract::{adjacencies, classify, segment, ExtractParams};
use topobench::fixtures;
use topobench::plangen::{FloorPlan, SiteBoundary, EMPTY};
use topobench::raster::RasterImage;
use topobench::topology::RoomId;

// Hand-built case-house plans. Each room fills a 4x4 block of cells on a 16x16 site;
// 0 marks an empty block.
pub const BLOCK: usize = 4;
pub const SIDE: usize = 4 * BLOCK;

pub const BASE_BLOCKS: [[i32; 4]; 4] = [
    [0, 1, 11, 12],
    [2, 4, 8, 6],
    [10, 7, 0, 0],
    [0, 5, 3, 9],
];

pub fn blocks_to_cells(blocks: &[[i32; 4]; 4]) -> Vec<i32> {
    let mut cells = vec![EMPTY; SIDE * SIDE];
    for y in 0..SIDE {
        for x in 0..SIDE {
            let room = blocks[y / BLOCK][x / BLOCK];
            if room > 0 {
                cells[y * SIDE + x] = room;
            }
        }
    }
    cells
}

pub fn plan_of(cells: Vec<i32>) -> FloorPlan {
    FloorPlan::from_grid(&fixtures::case_house(), &SiteBoundary::full(SIDE, SIDE), cells)
}

/// Every required contact is a full block side and the entrance touches the top edge.
pub fn qualified_fixture() -> FloorPlan {
    plan_of(blocks_to_cells(&BASE_BLOCKS))
}

/// Room 4 takes the entrance's block and the entrance shrinks to a 2x2 island inside
/// room 4, so it still touches 4 along eight sides but never reaches the outside.
pub fn enclosed_entrance_fixture() -> FloorPlan {
    let mut blocks = BASE_BLOCKS;
    blocks[0][1] = 4;
    let mut cells = blocks_to_cells(&blocks);
    for y in 5..7 {
        for x in 5..7 {
            cells[y * SIDE + x] = 1;
        }
    }
    plan_of(cells)
}

/// Room 9 moves to the bottom-left block, away from room 3.
pub fn adjacency_gap_fixture() -> FloorPlan {
    let mut blocks = BASE_BLOCKS;
    blocks[3][3] = 0;
    blocks[3][0] = 9;
    plan_of(blocks_to_cells(&blocks))
}

/// Room 12 keeps a single cell on the side it shares with room 6.
pub fn point_contact_fixture() -> FloorPlan {
    let mut cells = blocks_to_cells(&BASE_BLOCKS);
    for x in 12..15 {
        cells[3 * SIDE + x] = EMPTY;
    }
    plan_of(cells)
}

/// Side and corner contacts between rooms `a` and `b`, counted from the cells of `a`
/// over all eight neighbours.
pub fn cell_contacts(plan: &FloorPlan, a: RoomId, b: RoomId) -> (usize, usize) {
    let (w, h) = (plan.width as isize, plan.height as isize);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w || y >= h {
            EMPTY
        } else {
            plan.cells[(y * w + x) as usize]
        }
    };
    let (mut side, mut corner) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            if at(x, y) != a as i32 {
                continue;
            }
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dx, dy) == (0, 0) || at(x + dx, y + dy) != b as i32 {
                        continue;
                    }
                    if dx == 0 || dy == 0 {
                        side += 1;
                    } else {
                        corner += 1;
                    }
                }
            }
        }
    }
    (side, corner)
}

/// Random label map: either a Voronoi partition with some empty cells, or per-pixel
/// noise over a few labels. `None` is background.
pub fn random_label_map(rng: &mut impl Rng, w: usize, h: usize) -> Vec<Option<u32>> {
    if rng.random_bool(0.7) {
        let k = rng.random_range(2..=16);
        let seeds: Vec<(f64, f64, Option<u32>)> = (0..k)
            .map(|_| {
                let label = (!rng.random_bool(0.15)).then(|| rng.random_range(1..=12));
                (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64), label)
            })
            .collect();
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
                seeds
                    .iter()
                    .min_by(|a, b| {
                        let da = (a.0 - x).powi(2) + (a.1 - y).powi(2);
                        let db = (b.0 - x).powi(2) + (b.1 - y).powi(2);
                        da.total_cmp(&db)
                    })
                    .unwrap()
                    .2
            })
            .collect()
    } else {
        let labels: Vec<u32> = (0..rng.random_range(2..=4)).map(|_| rng.random_range(1..=12)).collect();
        (0..w * h)
            .map(|_| (!rng.random_bool(0.2)).then(|| labels[rng.random_range(0..labels.len())]))
            .collect()
    }
}

pub fn paint(labels: &[Option<u32>], w: usize, h: usize) -> RasterImage {
    let palette = fixtures::rgb_palette();
    let mut img = RasterImage::filled(w, h, palette.background);
    for (p, l) in img.pixels.iter_mut().zip(labels) {
        if let Some(l) = l {
            *p = palette.color_of(*l).unwrap();
        }
    }
    img
}

/// Region labels by breadth-first flood fill over equal labels.
pub fn components(labels: &[Option<u32>], w: usize, h: usize) -> Vec<Option<usize>> {
    let mut comp = vec![None; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if labels[start].is_none() || comp[start].is_some() {
            continue;
        }
        comp[start] = Some(next);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut ns = Vec::new();
            if x > 0 {
                ns.push(i - 1);
            }
            if x + 1 < w {
                ns.push(i + 1);
            }
            if y > 0 {
                ns.push(i - w);
            }
            if y + 1 < h {
                ns.push(i + w);
            }
            for n in ns {
                if comp[n].is_none() && labels[n] == labels[i] {
                    comp[n] = Some(next);
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Label pair -> number of distinct region pairs with a 4-adjacent pixel pair.
pub fn oracle_adjacency(labels: &[Option<u32>], w: usize, h: usize) -> BTreeMap<(u32, u32), usize> {
    let comp = components(labels, w, h);
    let mut region_pairs = std::collections::BTreeSet::new();
    for i in 0..w * h {
        let right = (i % w + 1 < w).then(|| i + 1);
        let down = (i / w + 1 < h).then(|| i + w);
        for j in [right, down].into_iter().flatten() {
            if let (Some(a), Some(b)) = (comp[i], comp[j]) {
                if a != b {
                    let (la, lb) = (labels[i].unwrap(), labels[j].unwrap());
                    let key = if a < b { (a, b, la, lb) } else { (b, a, lb, la) };
                    region_pairs.insert(key);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (_, _, la, lb) in region_pairs {
        *out.entry((la.min(lb), la.max(lb))).or_insert(0) += 1;
    }
    out
}

/// The library pipeline on a painted label map, keeping every region.
pub fn pipeline_adjacency(
    labels: &[Option<u32>],
    w: usize,
    h: usize,
    radius: usize,
    min_overlap: usize,
) -> BTreeMap<(u32, u32), usize> {
    let params = ExtractParams { min_area_fraction: 1e-9, dilation_radius: radius, min_overlap };
    let img = paint(labels, w, h);
    let map = classify(&img, &fixtures::rgb_palette());
    let regions = segment(&map, &params);
    adjacencies(&regions, w, h, &params)
        .into_iter()
        .map(|(p, n)| ((p.lo(), p.hi()), n))
        .collect()
}

/// Least-squares residual of `y` on the columns, by modified Gram-Schmidt.
fn residual_sse(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in columns {
        let mut v = c.clone();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let mut r = y.to_vec();
    for q in &basis {
        let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
        r.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
    }
    r.iter().map(|a| a * a).sum()
}

/// Error of every continuous two-knot fit, knots at interior indices `1 <= i < j <= n-2`.
pub fn brute_force_fits(series: &[(u32, f64)]) -> Vec<(usize, usize, f64)> {
    let n = series.len();
    let x: Vec<f64> = series.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let hinge = |k: usize| x.iter().map(|v| (v - x[k]).max(0.0)).collect::<Vec<_>>();
    let mut out = Vec::new();
    for i in 1..n - 2 {
        for j in i + 1..n - 1 {
            let cols = vec![vec![1.0; n], x.clone(), hinge(i), hinge(j)];
            out.push((i, j, residual_sse(&cols, &y)));
        }
    }
    out
}

/// Knot epochs of the strict best fit.
pub fn oracle_breaks(series: &[(u32, f64)]) -> (u32, u32) {
    let fits = brute_force_fits(series);
    let best = fits.iter().min_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
    (series[best.0].0, series[best.1].0)
}

/// Continuous three-piece line with knots at `b1` and `b2`.
pub fn hinge_series(epochs: impl Iterator<Item = u32>, b1: f64, b2: f64) -> Vec<(u32, f64)> {
    epochs
        .map(|e| {
            let x = e as f64;
            (e, 1.0 + 0.02 * x + 0.05 * (x - b1).max(0.0) - 0.08 * (x - b2).max(0.0))
        })
        .collect()
}

pub fn logistic_series() -> Vec<(u32, f64)> {
    (1..=200).map(|e| (e, 1.0 / (1.0 + (-(e as f64 - 25.0) / 5.0).exp()))).collect()
}

/// `[g_gan, g_l1, d_real, d_fake]` of each record line, read by splitting on whitespace.
pub fn oracle_loss_values(text: &str) -> Vec<[f64; 4]> {
    text.lines()
        .filter(|l| l.starts_with("(epoch:"))
        .map(|l| {
            let tokens: Vec<&str> = l.split_whitespace().collect();
            let value = |key: &str| {
                let k = tokens.iter().position(|t| *t == key).unwrap();
                tokens[k + 1].parse::<f64>().unwrap()
            };
            [value("G_GAN:"), value("G_L1:"), value("D_real:"), value("D_fake:")]
        })
        .collect()
}

/// Random case-house grid on a notched `w`x`h` site: rooms from a Voronoi partition,
/// some left empty, nothing outside the site.
pub fn random_plan(rng: &mut impl Rng, w: usize, h: usize) -> FloorPlan {
    let (nx, ny) = (rng.random_range(0..w / 2), rng.random_range(0..h / 2));
    let boundary = SiteBoundary::from_fn(w, h, |x, y| !(x >= w - nx && y < ny));
    let seeds: Vec<(usize, usize, i32)> = (0..rng.random_range(4..=20))
        .map(|_| {
            let room = if rng.random_bool(0.1) { EMPTY } else { rng.random_range(1..=12) };
            (rng.random_range(0..w), rng.random_range(0..h), room)
        })
        .collect();
    let cells = (0..w * h)
        .map(|i| {
            if !boundary.mask[i] {
                return EMPTY;
            }
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            seeds
                .iter()
                .min_by_key(|s| (s.0 as isize - x).pow(2) + (s.1 as isize - y).pow(2))
                .unwrap()
                .2
        })
        .collect();
    FloorPlan::from_grid(&fixtures::case_house(), &boundary, cells)
}
