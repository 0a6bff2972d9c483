//! Recheck of a plan against its required topology.
//!
//! A plan is rejected when the entrance is enclosed, when a required adjacency has no
//! contact at all, or when a required adjacency is only a corner or a contact shorter
//! than `min_contact` cell sides. Extra contacts between rooms that the graph does not
//! connect are allowed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plangen::FloorPlan;
use crate::topology::{Pair, RoomId, TopologyGraph};

pub const DEFAULT_MIN_CONTACT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    EntranceEnclosed,
    AdjacencyGap,
    PointContact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detail {
    Room(RoomId),
    Edge(RoomId, RoomId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    pub rule: Rule,
    pub detail: Detail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Qualified,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationResult {
    pub verdict: Verdict,
    pub reasons: Vec<Reason>,
}

impl QualificationResult {
    fn from_reasons(reasons: Vec<Reason>) -> Self {
        let verdict = if reasons.is_empty() { Verdict::Qualified } else { Verdict::Rejected };
        QualificationResult { verdict, reasons }
    }

    pub fn is_qualified(&self) -> bool {
        self.verdict == Verdict::Qualified
    }

    pub fn rules(&self) -> BTreeSet<Rule> {
        self.reasons.iter().map(|r| r.rule).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QualifyError {
    #[error("plan does not belong to this graph: {0}")]
    GraphMismatch(String),
    #[error("room {0} does not appear in the plan")]
    UnknownRoom(RoomId),
}

/// Side contacts and corner contacts between every pair of rooms in a plan.
#[derive(Debug, Default, Clone)]
pub struct Contacts {
    pub sides: BTreeMap<Pair<RoomId>, usize>,
    pub corners: BTreeMap<Pair<RoomId>, usize>,
}

impl Contacts {
    pub fn of(plan: &FloorPlan) -> Self {
        let (w, h) = (plan.width, plan.height);
        let mut c = Contacts::default();
        let bump = |map: &mut BTreeMap<Pair<RoomId>, usize>, a: i32, b: i32| {
            if a >= 0 && b >= 0 && a != b {
                *map.entry(Pair::new(a as RoomId, b as RoomId)).or_insert(0) += 1;
            }
        };
        for y in 0..h {
            for x in 0..w {
                let here = plan.cells[y * w + x];
                if here < 0 {
                    continue;
                }
                if x + 1 < w {
                    bump(&mut c.sides, here, plan.cells[y * w + x + 1]);
                }
                if y + 1 < h {
                    bump(&mut c.sides, here, plan.cells[(y + 1) * w + x]);
                    if x + 1 < w {
                        bump(&mut c.corners, here, plan.cells[(y + 1) * w + x + 1]);
                    }
                    if x > 0 {
                        bump(&mut c.corners, here, plan.cells[(y + 1) * w + x - 1]);
                    }
                }
            }
        }
        c
    }

    pub fn side(&self, a: RoomId, b: RoomId) -> usize {
        self.sides.get(&Pair::new(a, b)).copied().unwrap_or(0)
    }

    pub fn corner(&self, a: RoomId, b: RoomId) -> usize {
        self.corners.get(&Pair::new(a, b)).copied().unwrap_or(0)
    }
}

/// Number of 4-adjacent cell pairs with one cell in room `a` and the other in room `b`.
pub fn contact_length(plan: &FloorPlan, a: RoomId, b: RoomId) -> Result<usize, QualifyError> {
    for id in [a, b] {
        if !plan.cells.contains(&(id as i32)) {
            return Err(QualifyError::UnknownRoom(id));
        }
    }
    if a == b {
        return Ok(0);
    }
    Ok(Contacts::of(plan).side(a, b))
}

pub fn check_plan(
    plan: &FloorPlan,
    graph: &TopologyGraph,
    min_contact: usize,
) -> Result<QualificationResult, QualifyError> {
    if plan.graph_id != graph.fingerprint() {
        return Err(QualifyError::GraphMismatch(format!(
            "plan graph_id {} != graph {}",
            plan.graph_id,
            graph.fingerprint()
        )));
    }
    if let Some(&bad) = plan.cells.iter().find(|&&c| c >= 0 && !graph.contains_room(c as RoomId)) {
        return Err(QualifyError::GraphMismatch(format!("unknown room id {bad}")));
    }

    let mut reasons = Vec::new();
    let boundary = plan.boundary();
    let entrance = graph.entrance_id as i32;
    let entrance_open = (0..plan.cells.len())
        .any(|i| plan.cells[i] == entrance && boundary.touches_exterior(i));
    if !entrance_open {
        reasons.push(Reason { rule: Rule::EntranceEnclosed, detail: Detail::Room(graph.entrance_id) });
    }

    let contacts = Contacts::of(plan);
    for edge in graph.edge_set() {
        let (a, b) = (edge.lo(), edge.hi());
        let side = contacts.side(a, b);
        let corner = contacts.corner(a, b);
        let detail = Detail::Edge(a, b);
        if side == 0 && corner == 0 {
            reasons.push(Reason { rule: Rule::AdjacencyGap, detail });
        } else if side < min_contact {
            reasons.push(Reason { rule: Rule::PointContact, detail });
        }
    }
    Ok(QualificationResult::from_reasons(reasons))
}
