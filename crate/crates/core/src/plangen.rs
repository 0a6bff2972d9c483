//! Cell-grid floor-plan generation constrained by a [`TopologyGraph`].
//!
//! Each room is given a projected square of side about sqrt(target area). Rooms are seeded
//! one at a time, entrance first on the site edge, each next to the projected squares of
//! its already-placed graph neighbours while overlapping the others as little as possible.
//! All rooms then grow round-robin one cell at a time: a room reaches towards neighbours
//! it does not touch yet, and grows around its own seed once it touches them all. Enclosed
//! empty pockets go to the neediest neighbouring room and the result is rechecked with
//! [`crate::qualify`]. Rejected attempts are retried on the next RNG stream.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qualify::{self, Rule};
use crate::topology::{validate_graph, GraphViolation, Pair, RoomId, TopologyGraph};

/// Grid value for a cell that holds no room.
pub const EMPTY: i32 = -1;

/// A room must reach this fraction of its target area or the attempt overflows.
pub const MIN_FILL: f64 = 0.75;

/// Which cells of the grid belong to the site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteBoundary {
    pub width: usize,
    pub height: usize,
    #[serde(with = "mask_bits")]
    pub mask: Vec<bool>,
}

mod mask_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mask: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(mask.iter().map(|&b| b as u8))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let bits = Vec::<u8>::deserialize(d)?;
        Ok(bits.into_iter().map(|b| b != 0).collect())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoundaryError {
    #[error("mask has {got} cells, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("boundary has no inside cells")]
    Empty,
    #[error("inside region is not 4-connected")]
    NotConnected,
}

impl SiteBoundary {
    pub fn from_fn(width: usize, height: usize, inside: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                mask.push(inside(x, y));
            }
        }
        SiteBoundary { width, height, mask }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |_, _| true)
    }

    pub fn validate(&self) -> Result<(), BoundaryError> {
        let expected = self.width * self.height;
        if self.mask.len() != expected {
            return Err(BoundaryError::SizeMismatch { expected, got: self.mask.len() });
        }
        let Some(start) = self.mask.iter().position(|&b| b) else {
            return Err(BoundaryError::Empty);
        };
        let mut seen = vec![false; expected];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for n in neighbors4(i, self.width, self.height) {
                if self.mask[n] && !seen[n] {
                    seen[n] = true;
                    count += 1;
                    queue.push_back(n);
                }
            }
        }
        if count != self.inside_count() {
            return Err(BoundaryError::NotConnected);
        }
        Ok(())
    }

    pub fn inside(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn inside_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// True if cell `idx` is on the grid border or 4-adjacent to an outside cell.
    pub fn touches_exterior(&self, idx: usize) -> bool {
        let (x, y) = (idx % self.width, idx / self.width);
        if x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height {
            return true;
        }
        neighbors4(idx, self.width, self.height).any(|n| !self.mask[n])
    }

    /// Inside cells that touch the exterior.
    pub fn interface_cells(&self) -> Vec<usize> {
        (0..self.mask.len())
            .filter(|&i| self.mask[i] && self.touches_exterior(i))
            .collect()
    }

    /// Reads a monochrome image: every non-white pixel is inside.
    pub fn from_image(img: &crate::raster::RasterImage) -> Self {
        let mask = img.pixels.iter().map(|p| p.0 != [255, 255, 255]).collect();
        SiteBoundary { width: img.width, height: img.height, mask }
    }
}

/// 4-neighbours of a row-major cell index.
pub(crate) fn neighbors4(idx: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (idx % width, idx / width);
    let left = (x > 0).then(|| idx - 1);
    let right = (x + 1 < width).then(|| idx + 1);
    let up = (y > 0).then(|| idx - width);
    let down = (y + 1 < height).then(|| idx + width);
    [left, right, up, down].into_iter().flatten()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Chebyshev cell distance within which a new seed must lie of its placed neighbours.
    pub max_adjacency_distance: u32,
    /// Cells allocated per unit of area weight.
    pub density: u32,
    pub max_retries: u32,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { max_adjacency_distance: 2, density: 250, max_retries: 50, seed: 0 }
    }
}

impl GenParams {
    pub fn with_seed(self, seed: u64) -> Self {
        GenParams { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.max_adjacency_distance < 1 {
            return Err(GenError::InvalidParams("max_adjacency_distance must be >= 1".into()));
        }
        if self.density < 1 {
            return Err(GenError::InvalidParams("density must be >= 1".into()));
        }
        if self.max_retries < 1 {
            return Err(GenError::InvalidParams("max_retries must be >= 1".into()));
        }
        Ok(())
    }
}

/// A generated layout: one room id (or [`EMPTY`]) per cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorPlan {
    pub graph_id: String,
    pub seed: u64,
    #[serde(default)]
    pub attempt: u32,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<i32>,
    #[serde(with = "mask_bits", default)]
    pub mask: Vec<bool>,
}

impl FloorPlan {
    /// Builds a plan from a grid, e.g. for hand-made fixtures.
    pub fn from_grid(graph: &TopologyGraph, boundary: &SiteBoundary, cells: Vec<i32>) -> Self {
        assert_eq!(cells.len(), boundary.width * boundary.height);
        FloorPlan {
            graph_id: graph.fingerprint(),
            seed: 0,
            attempt: 0,
            width: boundary.width,
            height: boundary.height,
            cells,
            mask: boundary.mask.clone(),
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let mut plan: FloorPlan = serde_json::from_str(text)?;
        if plan.mask.is_empty() {
            plan.mask = vec![true; plan.width * plan.height];
        }
        Ok(plan)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn boundary(&self) -> SiteBoundary {
        SiteBoundary { width: self.width, height: self.height, mask: self.mask.clone() }
    }

    pub fn room_at(&self, idx: usize) -> Option<RoomId> {
        let v = self.cells[idx];
        (v >= 0).then_some(v as RoomId)
    }

    pub fn room_cells(&self, id: RoomId) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| self.cells[i] == id as i32).collect()
    }

    pub fn area_by_room(&self) -> BTreeMap<RoomId, usize> {
        let mut out = BTreeMap::new();
        for &c in &self.cells {
            if c >= 0 {
                *out.entry(c as RoomId).or_insert(0) += 1;
            }
        }
        out
    }
}

/// Why a single generation attempt was thrown away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureReason {
    NoSeedCandidate,
    GrowthOverflow,
    EntranceEnclosed,
    AdjacencyGap,
    PointContact,
}

impl From<Rule> for FailureReason {
    fn from(r: Rule) -> Self {
        match r {
            Rule::EntranceEnclosed => FailureReason::EntranceEnclosed,
            Rule::AdjacencyGap => FailureReason::AdjacencyGap,
            Rule::PointContact => FailureReason::PointContact,
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub type ReasonHistogram = BTreeMap<FailureReason, usize>;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<GraphViolation>),
    #[error("invalid boundary: {0}")]
    InvalidBoundary(#[from] BoundaryError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("generation failed after {attempts} attempts ({})", histogram_summary(.reasons))]
    GenerationFailed { attempts: u32, reasons: ReasonHistogram },
}

pub fn histogram_summary(h: &ReasonHistogram) -> String {
    h.iter().map(|(k, v)| format!("{k}: {v}")).collect::<Vec<_>>().join(", ")
}

pub fn dominant_reason(h: &ReasonHistogram) -> Option<FailureReason> {
    h.iter().max_by_key(|(k, v)| (**v, std::cmp::Reverse(**k))).map(|(k, _)| *k)
}

fn check_inputs(
    graph: &TopologyGraph,
    boundary: &SiteBoundary,
    params: &GenParams,
) -> Result<(), GenError> {
    validate_graph(graph).map_err(GenError::InvalidGraph)?;
    boundary.validate()?;
    params.validate()
}

/// Room placement order: entrance first, then by descending degree, ties by id.
pub fn placement_order(graph: &TopologyGraph) -> Vec<RoomId> {
    let mut rest: Vec<RoomId> =
        graph.rooms.iter().map(|r| r.id).filter(|&id| id != graph.entrance_id).collect();
    rest.sort_by_key(|&id| (std::cmp::Reverse(graph.degree(id)), id));
    let mut order = vec![graph.entrance_id];
    order.extend(rest);
    order
}

pub fn target_cells(density: u32, area_weight: f64) -> usize {
    (density as f64 * area_weight).ceil() as usize
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One generation attempt on RNG stream `attempt`.
pub fn attempt_plan(
    graph: &TopologyGraph,
    boundary: &SiteBoundary,
    params: &GenParams,
    attempt: u32,
) -> Result<FloorPlan, Vec<FailureReason>> {
    let plan = layout(graph, boundary, params, attempt)?;
    let area = plan.area_by_room();
    let overflow = graph.rooms.iter().any(|r| {
        let need = (MIN_FILL * target_cells(params.density, r.area_weight) as f64).ceil() as usize;
        area.get(&r.id).copied().unwrap_or(0) < need
    });
    if overflow {
        return Err(vec![FailureReason::GrowthOverflow]);
    }
    let result = qualify::check_plan(&plan, graph, qualify::DEFAULT_MIN_CONTACT)
        .expect("generated plans only use graph rooms");
    if result.is_qualified() {
        Ok(plan)
    } else {
        let mut reasons: Vec<FailureReason> =
            result.reasons.iter().map(|r| FailureReason::from(r.rule)).collect();
        reasons.sort();
        reasons.dedup();
        Err(reasons)
    }
}

/// Seeding, growth and pocket filling for one attempt, without the final recheck.
pub fn layout(
    graph: &TopologyGraph,
    boundary: &SiteBoundary,
    params: &GenParams,
    attempt: u32,
) -> Result<FloorPlan, Vec<FailureReason>> {
    let mut rng = stream_rng(params.seed, attempt as u64);
    let (w, h) = (boundary.width, boundary.height);
    let mut cells = vec![EMPTY; w * h];
    let order = placement_order(graph);
    // Per-room tables are indexed by room id.
    let slots = graph.rooms.iter().map(|r| r.id as usize + 1).max().unwrap_or(0);
    let mut targets = vec![0usize; slots];
    for r in &graph.rooms {
        targets[r.id as usize] = target_cells(params.density, r.area_weight);
    }
    let radii: Vec<f64> = targets.iter().map(|&t| (t as f64).sqrt() / 2.0).collect();
    let radius = |id: RoomId| radii[id as usize];
    let mut area = vec![0usize; slots];
    let mut rooms: Vec<Growing> = Vec::with_capacity(order.len());
    let mut seeds: Vec<(RoomId, usize)> = Vec::with_capacity(order.len());

    let reach = params.max_adjacency_distance as f64;
    let inside_table = InsideTable::new(boundary);
    let interface = boundary.interface_cells();
    let mut pending: Vec<RoomId> = order.clone();
    while !pending.is_empty() {
        // Next room in order that already has a placed neighbour, if any.
        let k = pending
            .iter()
            .position(|&id| graph.neighbors(id).iter().any(|&n| area[n as usize] > 0))
            .unwrap_or(0);
        let room = pending.remove(k);
        let r = radius(room);
        let neighbors = graph.neighbors(room);
        let placed: Vec<(RoomId, usize)> =
            seeds.iter().copied().filter(|(id, _)| neighbors.contains(id)).collect();
        let free: Vec<usize> = if room == graph.entrance_id {
            interface.iter().copied().filter(|&i| cells[i] == EMPTY).collect()
        } else {
            (0..w * h).filter(|&i| boundary.inside(i) && cells[i] == EMPTY).collect()
        };
        // A neighbour's region is projected as the square of its radius around its seed.
        let gap = |i: usize, (id, s): (RoomId, usize)| chebyshev(i, s, w) as f64 - r - radius(id);
        let candidates: Vec<usize> = if placed.is_empty() {
            free
        } else {
            let all: Vec<usize> = free
                .iter()
                .copied()
                .filter(|&i| placed.iter().all(|&n| gap(i, n) <= reach))
                .collect();
            if all.is_empty() {
                free.into_iter().filter(|&i| placed.iter().any(|&n| gap(i, n) <= reach)).collect()
            } else {
                all
            }
        };
        if candidates.is_empty() {
            return Err(vec![FailureReason::NoSeedCandidate]);
        }
        let crowding = |i: usize| {
            let overlap: f64 = seeds.iter().map(|&x| (1.0 - gap(i, x)).max(0.0)).sum();
            overlap + inside_table.outside_rows(i, r)
        };
        let touching = |i: usize| placed.iter().filter(|&&n| gap(i, n) <= 1.0).count();
        let best = candidates.iter().map(|&i| touching(i)).max().unwrap_or(0);
        let tier: Vec<(usize, f64)> = candidates
            .iter()
            .filter(|&&i| touching(i) == best)
            .map(|&i| (i, crowding(i)))
            .collect();
        let least = tier.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        let top: Vec<usize> =
            tier.iter().filter(|t| t.1 <= least + CROWDING_SLACK).map(|t| t.0).collect();
        let &pick = top.choose(&mut rng).expect("non-empty");
        plant(&mut cells, &mut rooms, &mut area, room, pick, w, h);
        seeds.push((room, pick));
    }
    grow(&mut cells, boundary, graph, &mut rooms, &mut area, &targets);

    absorb_enclosed_pockets(&mut cells, boundary, &targets, &mut area);

    Ok(FloorPlan {
        graph_id: graph.fingerprint(),
        seed: params.seed,
        attempt,
        width: w,
        height: h,
        cells,
        mask: boundary.mask.clone(),
    })
}

/// Seeds whose crowding is within this much of the least crowded candidate are equivalent.
const CROWDING_SLACK: f64 = 0.5;

fn chebyshev(a: usize, b: usize, width: usize) -> usize {
    let (ax, ay) = (a % width, a / width);
    let (bx, by) = (b % width, b / width);
    ax.abs_diff(bx).max(ay.abs_diff(by))
}

/// Summed-area table of inside cells, for counting how much of a square leaves the site.
struct InsideTable {
    width: usize,
    height: usize,
    sums: Vec<u32>,
}

impl InsideTable {
    fn new(boundary: &SiteBoundary) -> Self {
        let (w, h) = (boundary.width, boundary.height);
        let mut sums = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                sums[(y + 1) * (w + 1) + x + 1] = boundary.inside(y * w + x) as u32
                    + sums[y * (w + 1) + x + 1]
                    + sums[(y + 1) * (w + 1) + x]
                    - sums[y * (w + 1) + x];
            }
        }
        InsideTable { width: w, height: h, sums }
    }

    /// Cells of the square of radius `r` around `idx` that fall outside the site, in
    /// units of the square's side.
    fn outside_rows(&self, idx: usize, r: f64) -> f64 {
        let k = r.round() as usize;
        let (x, y) = (idx % self.width, idx / self.width);
        let (x0, y0) = (x.saturating_sub(k), y.saturating_sub(k));
        let (x1, y1) = ((x + k + 1).min(self.width), (y + k + 1).min(self.height));
        let s = |x: usize, y: usize| self.sums[y * (self.width + 1) + x] as i64;
        let inside = s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0);
        let side = (2 * k + 1) as i64;
        (side * side - inside) as f64 / side as f64
    }
}

struct Growing {
    room: RoomId,
    seed: usize,
    frontier: Vec<usize>,
    queued: Vec<bool>,
}

impl Growing {
    fn push_neighbors(&mut self, cell: usize, w: usize, h: usize) {
        for n in neighbors4(cell, w, h) {
            if !self.queued[n] {
                self.queued[n] = true;
                self.frontier.push(n);
            }
        }
    }
}

fn plant(
    cells: &mut [i32],
    rooms: &mut Vec<Growing>,
    area: &mut [usize],
    room: RoomId,
    cell: usize,
    w: usize,
    h: usize,
) {
    cells[cell] = room as i32;
    area[room as usize] = 1;
    let mut g = Growing { room, seed: cell, frontier: Vec::new(), queued: vec![false; w * h] };
    g.queued[cell] = true;
    g.push_neighbors(cell, w, h);
    rooms.push(g);
}

fn dist2(a: usize, b: usize, w: usize) -> usize {
    let (ax, ay) = (a % w, a / w);
    let (bx, by) = (b % w, b / w);
    ax.abs_diff(bx).pow(2) + ay.abs_diff(by).pow(2)
}

/// Round-robin growth, one cell per room per round, until every room has reached its cap
/// or run out of frontier. A room claims the frontier cell nearest to the seed of a graph
/// neighbour it does not yet properly touch, or nearest its own seed once it touches all
/// of them.
fn grow(
    cells: &mut [i32],
    boundary: &SiteBoundary,
    graph: &TopologyGraph,
    rooms: &mut [Growing],
    area: &mut [usize],
    cap: &[usize],
) {
    let (w, h) = (boundary.width, boundary.height);
    let seed_of: BTreeMap<RoomId, usize> = rooms.iter().map(|g| (g.room, g.seed)).collect();
    let mut contact: BTreeMap<Pair<RoomId>, usize> = BTreeMap::new();
    let edges = graph.edge_set();
    loop {
        let mut grew = false;
        for g in rooms.iter_mut() {
            if area[g.room as usize] >= cap[g.room as usize] {
                continue;
            }
            g.frontier.retain(|&c| boundary.inside(c) && cells[c] == EMPTY);
            let goals: Vec<usize> = graph
                .neighbors(g.room)
                .into_iter()
                .filter(|n| {
                    contact.get(&Pair::new(g.room, *n)).copied().unwrap_or(0)
                        < qualify::DEFAULT_MIN_CONTACT
                })
                .filter_map(|n| seed_of.get(&n).copied())
                .collect();
            let score = |c: usize| {
                if goals.is_empty() {
                    dist2(c, g.seed, w)
                } else {
                    goals.iter().map(|&s| dist2(c, s, w)).min().expect("non-empty")
                }
            };
            let Some(k) = (0..g.frontier.len()).min_by_key(|&k| (score(g.frontier[k]), g.frontier[k]))
            else {
                continue;
            };
            let c = g.frontier.swap_remove(k);
            cells[c] = g.room as i32;
            area[g.room as usize] += 1;
            for n in neighbors4(c, w, h) {
                let other = cells[n];
                if other >= 0 && other != g.room as i32 {
                    let pair = Pair::new(g.room, other as RoomId);
                    if edges.contains(&pair) {
                        *contact.entry(pair).or_insert(0) += 1;
                    }
                }
            }
            g.push_neighbors(c, w, h);
            grew = true;
        }
        if !grew {
            break;
        }
    }
}

/// Empty components that do not reach the exterior are handed, cell by cell, to the
/// adjacent room with the largest remaining deficit (ties: lowest id).
fn absorb_enclosed_pockets(
    cells: &mut [i32],
    boundary: &SiteBoundary,
    targets: &[usize],
    area: &mut [usize],
) {
    let (w, h) = (boundary.width, boundary.height);
    let n = cells.len();
    let mut comp = vec![usize::MAX; n];
    let mut enclosed = vec![false; n];
    let mut next = 0;
    for start in 0..n {
        if !boundary.inside(start) || cells[start] != EMPTY || comp[start] != usize::MAX {
            continue;
        }
        let mut members = vec![start];
        comp[start] = next;
        let mut open = boundary.touches_exterior(start);
        let mut i = 0;
        while i < members.len() {
            let c = members[i];
            i += 1;
            for nb in neighbors4(c, w, h) {
                if boundary.inside(nb) && cells[nb] == EMPTY && comp[nb] == usize::MAX {
                    comp[nb] = next;
                    open |= boundary.touches_exterior(nb);
                    members.push(nb);
                }
            }
        }
        if !open {
            for m in members {
                enclosed[m] = true;
            }
        }
        next += 1;
    }

    loop {
        let mut changed = false;
        for c in 0..n {
            if !enclosed[c] || cells[c] != EMPTY {
                continue;
            }
            let best = neighbors4(c, w, h)
                .filter(|&nb| cells[nb] >= 0)
                .map(|nb| cells[nb] as RoomId)
                .max_by_key(|id| {
                    let deficit = targets[*id as usize] as i64 - area[*id as usize] as i64;
                    (deficit, std::cmp::Reverse(*id))
                });
            if let Some(id) = best {
                cells[c] = id as i32;
                area[id as usize] += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Generates one qualified plan, retrying up to `params.max_retries` attempts.
pub fn generate_plan(
    graph: &TopologyGraph,
    boundary: &SiteBoundary,
    params: &GenParams,
) -> Result<FloorPlan, GenError> {
    check_inputs(graph, boundary, params)?;
    generate_checked(graph, boundary, params).map(|(plan, _)| plan)
}

fn generate_checked(
    graph: &TopologyGraph,
    boundary: &SiteBoundary,
    params: &GenParams,
) -> Result<(FloorPlan, ReasonHistogram), GenError> {
    let mut reasons = ReasonHistogram::new();
    for attempt in 0..params.max_retries {
        match attempt_plan(graph, boundary, params, attempt) {
            Ok(plan) => return Ok((plan, reasons)),
            Err(rs) => {
                for r in rs {
                    *reasons.entry(r).or_insert(0) += 1;
                }
            }
        }
    }
    Err(GenError::GenerationFailed { attempts: params.max_retries, reasons })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub trials: usize,
    pub qualified: usize,
    pub yield_rate: f64,
    pub reasons: ReasonHistogram,
}

/// Runs `trials` single attempts (trial `t` uses seed `params.seed ^ t`) and reports the
/// qualified fraction with a histogram of rejection reasons.
pub fn pre_evaluate(
    graph: &TopologyGraph,
    boundary: &SiteBoundary,
    params: &GenParams,
    trials: usize,
) -> Result<FeasibilityReport, GenError> {
    check_inputs(graph, boundary, params)?;
    let outcomes: Vec<Result<FloorPlan, Vec<FailureReason>>> = (0..trials)
        .into_par_iter()
        .map(|t| attempt_plan(graph, boundary, &params.with_seed(params.seed ^ t as u64), 0))
        .collect();
    let mut reasons = ReasonHistogram::new();
    let mut qualified = 0;
    for o in outcomes {
        match o {
            Ok(_) => qualified += 1,
            Err(rs) => {
                for r in rs {
                    *reasons.entry(r).or_insert(0) += 1;
                }
            }
        }
    }
    let yield_rate = if trials == 0 { 0.0 } else { qualified as f64 / trials as f64 };
    Ok(FeasibilityReport { trials, qualified, yield_rate, reasons })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub attempts: usize,
    pub rejections: ReasonHistogram,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub plans: Vec<FloorPlan>,
    pub stats: DatasetStats,
}

/// Generates `count` qualified plans. Slot `i` uses seed `params.seed ^ i`, so slots are
/// independent and the output does not depend on scheduling.
pub fn generate_dataset(
    graph: &TopologyGraph,
    boundary: &SiteBoundary,
    params: &GenParams,
    count: usize,
) -> Result<Dataset, GenError> {
    check_inputs(graph, boundary, params)?;
    let started = Instant::now();
    let slots: Vec<Result<(FloorPlan, ReasonHistogram), GenError>> = (0..count)
        .into_par_iter()
        .map(|i| generate_checked(graph, boundary, &params.with_seed(params.seed ^ i as u64)))
        .collect();
    let mut plans = Vec::with_capacity(count);
    let mut rejections = ReasonHistogram::new();
    let mut attempts = 0;
    for slot in slots {
        let (plan, reasons) = slot?;
        attempts += plan.attempt as usize + 1;
        for (k, v) in reasons {
            *rejections.entry(k).or_insert(0) += v;
        }
        plans.push(plan);
    }
    Ok(Dataset {
        plans,
        stats: DatasetStats {
            count,
            attempts,
            rejections,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::topology::RoomSpec;

    fn line_graph(n: u32) -> TopologyGraph {
        let rooms = (1..=n)
            .map(|id| RoomSpec {
                id,
                name: format!("r{id}"),
                grey_level: (id as u8 - 1) % 5 + 1,
                rgb: crate::topology::Rgb([id as u8 * 40, 0, 0]),
                area_weight: 1.0,
            })
            .collect();
        let edges = (1..n).map(|i| (i, i + 1)).collect();
        TopologyGraph { rooms, edges, entrance_id: 1 }
    }

    #[test]
    fn placement_order_puts_entrance_first_then_degree() {
        let order = placement_order(&fixtures::case_house());
        assert_eq!(order, vec![1, 4, 7, 8, 3, 5, 6, 2, 9, 10, 11, 12]);
    }

    #[test]
    fn single_room_fills_its_target() {
        let g = line_graph(1);
        let b = SiteBoundary::full(16, 16);
        let params = GenParams { density: 100, ..GenParams::default() };
        let plan = generate_plan(&g, &b, &params).unwrap();
        assert_eq!(plan.area_by_room()[&1], 100);

        let params = GenParams { density: 1000, ..GenParams::default() };
        let plan = generate_plan(&g, &b, &params);
        // 256 cells available, 1000 requested: below the fill floor.
        assert!(matches!(plan, Err(GenError::GenerationFailed { .. })));

        let params = GenParams { density: 300, ..GenParams::default() };
        let plan = generate_plan(&g, &b, &params).unwrap();
        assert_eq!(plan.area_by_room()[&1], 256);
    }

    #[test]
    fn generation_is_deterministic() {
        let g = fixtures::case_house();
        let b = fixtures::rect_boundary();
        let p = GenParams::default().with_seed(42);
        assert_eq!(generate_plan(&g, &b, &p).unwrap(), generate_plan(&g, &b, &p).unwrap());
    }

    #[test]
    fn invalid_inputs_are_rejected_up_front() {
        let mut g = fixtures::case_house();
        g.edges.push((2, 2));
        let b = fixtures::rect_boundary();
        assert!(matches!(
            generate_plan(&g, &b, &GenParams::default()),
            Err(GenError::InvalidGraph(_))
        ));
        let g = fixtures::case_house();
        let split = SiteBoundary::from_fn(8, 8, |x, _| x != 4);
        assert!(matches!(
            generate_plan(&g, &split, &GenParams::default()),
            Err(GenError::InvalidBoundary(BoundaryError::NotConnected))
        ));
        let bad = GenParams { density: 0, ..GenParams::default() };
        assert!(matches!(generate_plan(&g, &b, &bad), Err(GenError::InvalidParams(_))));
    }

    #[test]
    fn empty_dataset_costs_nothing() {
        let d = generate_dataset(
            &fixtures::case_house(),
            &fixtures::rect_boundary(),
            &GenParams::default(),
            0,
        )
        .unwrap();
        assert!(d.plans.is_empty());
        assert_eq!(d.stats.attempts, 0);
    }

    #[test]
    fn pigeonhole_density_never_qualifies() {
        let g = fixtures::case_house();
        let b = fixtures::rect_boundary();
        let density = (4.0 * b.inside_count() as f64 / g.total_area_weight()).ceil() as u32;
        let params = GenParams { density, ..GenParams::default() };
        let report = pre_evaluate(&g, &b, &params, 20).unwrap();
        assert_eq!(report.yield_rate, 0.0);
        assert_eq!(dominant_reason(&report.reasons), Some(FailureReason::GrowthOverflow));
    }

    #[test]
    fn unconstrained_room_always_qualifies() {
        let g = line_graph(1);
        let b = fixtures::rect_boundary();
        let report = pre_evaluate(&g, &b, &GenParams::default(), 10).unwrap();
        assert_eq!(report.yield_rate, 1.0);
    }

    #[test]
    fn boundary_json_uses_bit_mask() {
        let b = SiteBoundary::from_fn(2, 2, |x, y| x == y);
        let text = serde_json::to_string(&b).unwrap();
        assert_eq!(text, r#"{"width":2,"height":2,"mask":[1,0,0,1]}"#);
        assert_eq!(serde_json::from_str::<SiteBoundary>(&text).unwrap(), b);
    }

    #[test]
    fn fixture_boundaries_are_valid() {
        for name in fixtures::BOUNDARY_NAMES {
            fixtures::boundary_by_name(name).unwrap().validate().unwrap();
        }
    }
}
