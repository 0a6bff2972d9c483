//! Rooms, adjacency graphs, colour palettes, and the projection of a room graph onto
//! grey-level pairs.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type RoomId = u32;

/// An 8-bit RGB colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u8; 3]", into = "[u8; 3]")]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
    pub const BLACK: Rgb = Rgb([0, 0, 0]);

    pub const fn grey(v: u8) -> Self {
        Rgb([v, v, v])
    }

    pub fn distance(self, other: Rgb) -> f64 {
        distance_f(self.as_f64(), other.as_f64())
    }

    pub fn as_f64(self) -> [f64; 3] {
        [self.0[0] as f64, self.0[1] as f64, self.0[2] as f64]
    }
}

impl From<[u8; 3]> for Rgb {
    fn from(v: [u8; 3]) -> Self {
        Rgb(v)
    }
}

impl From<Rgb> for [u8; 3] {
    fn from(v: Rgb) -> Self {
        v.0
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

pub(crate) fn distance_f(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dr = a[0] - b[0];
    let dg = a[1] - b[1];
    let db = a[2] - b[2];
    (dr * dr + dg * dg + db * db).sqrt()
}

/// Pixel values used for grey levels 1 (most public) through 5 (most private).
pub const GREY_LEVEL_VALUES: [u8; 5] = [230, 180, 128, 77, 26];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub id: RoomId,
    pub name: String,
    pub grey_level: u8,
    pub rgb: Rgb,
    pub area_weight: f64,
}

/// An unordered pair, stored with the smaller element first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair<T>(T, T);

impl<T: Ord + Copy> Pair<T> {
    pub fn new(a: T, b: T) -> Self {
        if a <= b {
            Pair(a, b)
        } else {
            Pair(b, a)
        }
    }

    pub fn lo(&self) -> T {
        self.0
    }

    pub fn hi(&self) -> T {
        self.1
    }

    pub fn contains(&self, v: T) -> bool {
        self.0 == v || self.1 == v
    }
}

impl<T: fmt::Display> fmt::Display for Pair<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

impl<T: Serialize> Serialize for Pair<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.0, &self.1).serialize(s)
    }
}

impl<'de, T: Deserialize<'de> + Ord + Copy> Deserialize<'de> for Pair<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (a, b) = <(T, T)>::deserialize(d)?;
        Ok(Pair::new(a, b))
    }
}

/// Rooms, the required ("core") adjacencies between them, and the entrance room.
///
/// Edges are kept as written; [`validate_graph`] reports self-loops and dangling ids
/// rather than rejecting them at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyGraph {
    pub rooms: Vec<RoomSpec>,
    pub edges: Vec<(RoomId, RoomId)>,
    pub entrance_id: RoomId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphViolation {
    EmptyGraph,
    DuplicateRoomId(RoomId),
    GreyLevelOutOfRange { room: RoomId, level: u8 },
    NonPositiveAreaWeight { room: RoomId },
    DuplicateColor { a: RoomId, b: RoomId },
    SelfLoop(RoomId),
    UnknownEndpoint { edge: (RoomId, RoomId), room: RoomId },
    DuplicateEdge(Pair<RoomId>),
    Disconnected,
    UnknownEntrance(RoomId),
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::EmptyGraph => write!(f, "graph has no rooms"),
            GraphViolation::DuplicateRoomId(id) => write!(f, "duplicate room id {id}"),
            GraphViolation::GreyLevelOutOfRange { room, level } => {
                write!(f, "room {room} has grey level {level}, expected 1..=5")
            }
            GraphViolation::NonPositiveAreaWeight { room } => {
                write!(f, "room {room} has a non-positive area weight")
            }
            GraphViolation::DuplicateColor { a, b } => {
                write!(f, "rooms {a} and {b} share an RGB colour")
            }
            GraphViolation::SelfLoop(id) => write!(f, "self-loop on room {id}"),
            GraphViolation::UnknownEndpoint { edge, room } => {
                write!(f, "edge ({},{}) references unknown room {room}", edge.0, edge.1)
            }
            GraphViolation::DuplicateEdge(p) => write!(f, "duplicate edge {p}"),
            GraphViolation::Disconnected => write!(f, "graph not connected"),
            GraphViolation::UnknownEntrance(id) => write!(f, "entrance {id} is not a room"),
        }
    }
}

impl TopologyGraph {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn room(&self, id: RoomId) -> Option<&RoomSpec> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn contains_room(&self, id: RoomId) -> bool {
        self.room(id).is_some()
    }

    /// Distinct unordered edges, excluding self-loops.
    pub fn edge_set(&self) -> BTreeSet<Pair<RoomId>> {
        self.edges
            .iter()
            .filter(|(a, b)| a != b)
            .map(|&(a, b)| Pair::new(a, b))
            .collect()
    }

    pub fn neighbors(&self, id: RoomId) -> Vec<RoomId> {
        let mut out: Vec<RoomId> = self
            .edge_set()
            .into_iter()
            .filter_map(|p| {
                if p.lo() == id {
                    Some(p.hi())
                } else if p.hi() == id {
                    Some(p.lo())
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, id: RoomId) -> usize {
        self.neighbors(id).len()
    }

    pub fn total_area_weight(&self) -> f64 {
        self.rooms.iter().map(|r| r.area_weight).sum()
    }

    /// Stable identifier derived from the graph's content.
    pub fn fingerprint(&self) -> String {
        let mut rooms = self.rooms.clone();
        rooms.sort_by_key(|r| r.id);
        let mut hasher = Sha256::new();
        for r in &rooms {
            hasher.update(format!(
                "r{}|{}|{}|{:?}|{};",
                r.id, r.name, r.grey_level, r.rgb.0, r.area_weight
            ));
        }
        for e in self.edge_set() {
            hasher.update(format!("e{}-{};", e.lo(), e.hi()));
        }
        hasher.update(format!("x{}", self.entrance_id));
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Checks every graph invariant and returns all violations found.
pub fn validate_graph(graph: &TopologyGraph) -> Result<(), Vec<GraphViolation>> {
    let mut out = Vec::new();
    if graph.rooms.is_empty() {
        out.push(GraphViolation::EmptyGraph);
        return Err(out);
    }

    let mut ids = HashSet::new();
    for r in &graph.rooms {
        if !ids.insert(r.id) {
            out.push(GraphViolation::DuplicateRoomId(r.id));
        }
        if !(1..=5).contains(&r.grey_level) {
            out.push(GraphViolation::GreyLevelOutOfRange {
                room: r.id,
                level: r.grey_level,
            });
        }
        if !(r.area_weight > 0.0) || !r.area_weight.is_finite() {
            out.push(GraphViolation::NonPositiveAreaWeight { room: r.id });
        }
    }
    for (i, a) in graph.rooms.iter().enumerate() {
        for b in &graph.rooms[i + 1..] {
            if a.rgb == b.rgb {
                out.push(GraphViolation::DuplicateColor { a: a.id, b: b.id });
            }
        }
    }

    let mut seen = HashSet::new();
    for &(a, b) in &graph.edges {
        if a == b {
            out.push(GraphViolation::SelfLoop(a));
            continue;
        }
        for end in [a, b] {
            if !ids.contains(&end) {
                out.push(GraphViolation::UnknownEndpoint { edge: (a, b), room: end });
            }
        }
        let p = Pair::new(a, b);
        if !seen.insert(p) {
            out.push(GraphViolation::DuplicateEdge(p));
        }
    }

    if !ids.contains(&graph.entrance_id) {
        out.push(GraphViolation::UnknownEntrance(graph.entrance_id));
    }

    if !is_connected(graph) {
        out.push(GraphViolation::Disconnected);
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn is_connected(graph: &TopologyGraph) -> bool {
    let ids: BTreeSet<RoomId> = graph.rooms.iter().map(|r| r.id).collect();
    let Some(&start) = ids.iter().next() else {
        return true;
    };
    let edges: Vec<Pair<RoomId>> = graph
        .edge_set()
        .into_iter()
        .filter(|p| ids.contains(&p.lo()) && ids.contains(&p.hi()))
        .collect();
    let mut visited = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(cur) = queue.pop_front() {
        for p in &edges {
            let next = if p.lo() == cur {
                p.hi()
            } else if p.hi() == cur {
                p.lo()
            } else {
                continue;
            };
            if visited.insert(next) {
                queue.push_back(next);
            }
        }
    }
    visited.len() == ids.len()
}

/// Number of core edges per unordered grey-level pair. Pairs with no edges are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreyAdjacencyProfile {
    pub counts: BTreeMap<Pair<u8>, usize>,
}

impl GreyAdjacencyProfile {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn support(&self) -> BTreeSet<Pair<u8>> {
        self.counts.keys().copied().collect()
    }

    pub fn get(&self, a: u8, b: u8) -> usize {
        self.counts.get(&Pair::new(a, b)).copied().unwrap_or(0)
    }
}

/// Projects the room graph onto grey levels. Same-level edges land on `(a, a)`.
pub fn grey_profile(graph: &TopologyGraph) -> GreyAdjacencyProfile {
    let mut counts = BTreeMap::new();
    for p in graph.edge_set() {
        let (Some(a), Some(b)) = (graph.room(p.lo()), graph.room(p.hi())) else {
            continue;
        };
        *counts.entry(Pair::new(a.grey_level, b.grey_level)).or_insert(0) += 1;
    }
    GreyAdjacencyProfile { counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub label: u32,
    pub rgb: Rgb,
}

/// Colours used to render and classify images.
///
/// `tolerance` is the largest Euclidean RGB distance at which a pixel still counts as a
/// palette colour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<PaletteEntry>,
    pub background: Rgb,
    pub boundary: Rgb,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PaletteViolation {
    DuplicateColor { color: Rgb },
    DuplicateLabel(u32),
    NegativeTolerance,
    TooClose { a: u32, b: u32, distance: f64 },
    /// The blend of entries `a` and `b` would classify as `other` (an entry label, or
    /// `None` for background/boundary).
    MidpointConfusion { a: u32, b: u32, other: Option<u32>, distance: f64 },
}

impl fmt::Display for PaletteViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PaletteViolation::DuplicateColor { color } => write!(f, "duplicate color {color}"),
            PaletteViolation::DuplicateLabel(l) => write!(f, "duplicate label {l}"),
            PaletteViolation::NegativeTolerance => write!(f, "tolerance must be non-negative"),
            PaletteViolation::TooClose { a, b, distance } => write!(
                f,
                "entries {a} and {b} are {distance:.2} apart, not more than twice the tolerance"
            ),
            PaletteViolation::MidpointConfusion { a, b, other, distance } => match other {
                Some(o) => write!(
                    f,
                    "midpoint of {a}/{b} is within tolerance of entry {o} ({distance:.2})"
                ),
                None => write!(
                    f,
                    "midpoint of {a}/{b} is within tolerance of background or boundary ({distance:.2})"
                ),
            },
        }
    }
}

impl Palette {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("palette serializes")
    }

    pub fn color_of(&self, label: u32) -> Option<Rgb> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.rgb)
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    /// Distinctness and the pairwise-distance rule only. Classification is well defined
    /// whenever this passes.
    pub fn separation_violations(&self) -> Vec<PaletteViolation> {
        let mut out = Vec::new();
        if !(self.tolerance >= 0.0) {
            out.push(PaletteViolation::NegativeTolerance);
        }
        let mut labels = HashSet::new();
        for e in &self.entries {
            if !labels.insert(e.label) {
                out.push(PaletteViolation::DuplicateLabel(e.label));
            }
        }
        let mut colors: Vec<Rgb> = self.entries.iter().map(|e| e.rgb).collect();
        colors.push(self.background);
        colors.push(self.boundary);
        let mut seen = HashSet::new();
        for c in colors {
            if !seen.insert(c) {
                out.push(PaletteViolation::DuplicateColor { color: c });
            }
        }
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                let d = a.rgb.distance(b.rgb);
                if a.rgb != b.rgb && d <= 2.0 * self.tolerance {
                    out.push(PaletteViolation::TooClose { a: a.label, b: b.label, distance: d });
                }
            }
        }
        out
    }

    /// Blend safety: the channel-wise midpoint of any two entries must stay outside the
    /// tolerance of every other entry, the background and the boundary colour.
    pub fn midpoint_violations(&self) -> Vec<PaletteViolation> {
        let mut out = Vec::new();
        for (i, a) in self.entries.iter().enumerate() {
            for (j, b) in self.entries.iter().enumerate().skip(i + 1) {
                let (fa, fb) = (a.rgb.as_f64(), b.rgb.as_f64());
                let mid = [(fa[0] + fb[0]) / 2.0, (fa[1] + fb[1]) / 2.0, (fa[2] + fb[2]) / 2.0];
                for (k, c) in self.entries.iter().enumerate() {
                    if k == i || k == j {
                        continue;
                    }
                    let d = distance_f(mid, c.rgb.as_f64());
                    if d <= self.tolerance {
                        out.push(PaletteViolation::MidpointConfusion {
                            a: a.label,
                            b: b.label,
                            other: Some(c.label),
                            distance: d,
                        });
                    }
                }
                for c in [self.background, self.boundary] {
                    let d = distance_f(mid, c.as_f64());
                    if d <= self.tolerance {
                        out.push(PaletteViolation::MidpointConfusion {
                            a: a.label,
                            b: b.label,
                            other: None,
                            distance: d,
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn validate_palette(palette: &Palette) -> Result<(), Vec<PaletteViolation>> {
    let mut out = palette.separation_violations();
    out.extend(palette.midpoint_violations());
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
