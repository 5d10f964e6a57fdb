//! Topological graph generation from a box set, and the planning graph
//! derived from it.
//!
//! Topo nodes are active room boxes (multi-box rooms become overlap-edge
//! cliques); door edges are added only when the map evidence shows the two
//! sides of the door actually connect. The planning graph inserts door
//! nodes, links doors sharing a room, pulls each room's position toward its
//! nearest door, and attaches a robot node.

use std::collections::BinaryHeap;

use serde::Serialize;

use crate::boxcalc::{BoxSet, DoorBox, RoomBox};
use crate::gridworld::{CellState, OccupancyGrid};

/// Interpolation factor from room centroid toward its nearest door.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Door traversability region: door box dilated by this many cells.
pub const DOOR_REGION_DILATION: f64 = 2.0;

#[derive(Clone, Debug, Serialize)]
pub struct RoomNode {
    pub id: usize,
    pub bbox: RoomBox,
    /// Connected component of the overlap relation (multi-box room id).
    pub group: usize,
    pub visited: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopoEdgeKind {
    /// Two boxes of one non-rectangular room; carries no door information.
    Overlap,
    Door { door: DoorBox },
}

#[derive(Clone, Debug, Serialize)]
pub struct TopoEdge {
    pub a: usize,
    pub b: usize,
    #[serde(flatten)]
    pub kind: TopoEdgeKind,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TopoGraph {
    pub nodes: Vec<RoomNode>,
    pub edges: Vec<TopoEdge>,
}

impl TopoGraph {
    pub fn door_edges(&self) -> impl Iterator<Item = (&TopoEdge, &DoorBox)> {
        self.edges.iter().filter_map(|e| match &e.kind {
            TopoEdgeKind::Door { door } => Some((e, door)),
            TopoEdgeKind::Overlap => None,
        })
    }

    pub fn unvisited_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.visited).count()
    }
}

/// Build the topological graph of a thresholded box set against the
/// accumulated map evidence.
///
/// Node order is row-major by box top-left so rebuilding from identical
/// inputs is identical output. Doors whose traversability check fails are
/// silently omitted.
pub fn build_topo(boxes: &BoxSet, accumulated: &OccupancyGrid) -> TopoGraph {
    // Stable node ordering.
    let mut active: Vec<usize> = boxes
        .rooms
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_active())
        .map(|(i, _)| i)
        .collect();
    active.sort_by(|&i, &j| {
        let (a, b) = (&boxes.rooms[i], &boxes.rooms[j]);
        (a.y0, a.x0, a.y1, a.x1, i)
            .partial_cmp(&(b.y0, b.x0, b.y1, b.x1, j))
            .unwrap()
    });
    let node_of: std::collections::HashMap<usize, usize> = active
        .iter()
        .enumerate()
        .map(|(n, &orig)| (orig, n))
        .collect();

    let mut nodes: Vec<RoomNode> = active
        .iter()
        .enumerate()
        .map(|(id, &orig)| RoomNode {
            id,
            bbox: boxes.rooms[orig],
            group: id,
            visited: false,
        })
        .collect();

    let mut edges = Vec::new();
    // Overlap edges between boxes with positive-area intersection.
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if nodes[i].bbox.overlaps(&nodes[j].bbox) {
                edges.push(TopoEdge {
                    a: i,
                    b: j,
                    kind: TopoEdgeKind::Overlap,
                });
            }
        }
    }
    // Multi-box groups: connected components of the overlap relation,
    // labeled by their smallest node id.
    let mut group: Vec<usize> = (0..nodes.len()).collect();
    fn find(group: &mut Vec<usize>, i: usize) -> usize {
        if group[i] != i {
            let root = find(group, group[i]);
            group[i] = root;
        }
        group[i]
    }
    for e in &edges {
        let (ra, rb) = (find(&mut group, e.a), find(&mut group, e.b));
        if ra != rb {
            let root = ra.min(rb);
            group[ra.max(rb)] = root;
            group[root] = root;
        }
    }
    for i in 0..nodes.len() {
        nodes[i].group = find(&mut group, i);
    }

    // Door edges, evidence-checked.
    for (_, door) in boxes.active_doors() {
        let (ra, rb) = door.rooms;
        let (Some(&na), Some(&nb)) = (node_of.get(&ra), node_of.get(&rb)) else {
            continue; // endpoint inactive or out of range
        };
        if na == nb {
            continue;
        }
        if door_traversable(door, &boxes.rooms[ra], &boxes.rooms[rb], accumulated) {
            let (a, b) = (na.min(nb), na.max(nb));
            edges.push(TopoEdge {
                a,
                b,
                kind: TopoEdgeKind::Door { door: *door },
            });
        }
    }
    TopoGraph { nodes, edges }
}

/// Check that the two sides of a door candidate are FREE and connected
/// through FREE cells within the dilated door region.
fn door_traversable(
    door: &DoorBox,
    room_a: &RoomBox,
    room_b: &RoomBox,
    accumulated: &OccupancyGrid,
) -> bool {
    let off = door.s / 2.0 + DOOR_REGION_DILATION;
    let (ca, cb) = (room_a.center(), room_b.center());
    // Wall normal: the axis along which the two rooms separate.
    let horizontal = (ca.0 - cb.0).abs() >= (ca.1 - cb.1).abs();
    let (pa, pb) = if horizontal {
        (
            (door.cx + off * (ca.0 - door.cx).signum(), door.cy),
            (door.cx + off * (cb.0 - door.cx).signum(), door.cy),
        )
    } else {
        (
            (door.cx, door.cy + off * (ca.1 - door.cy).signum()),
            (door.cx, door.cy + off * (cb.1 - door.cy).signum()),
        )
    };
    let to_cell = |p: (f64, f64)| -> Option<(usize, usize)> {
        let (x, y) = (p.0.round() as i64, p.1.round() as i64);
        accumulated
            .geometry()
            .contains_cell(x, y)
            .then_some((x as usize, y as usize))
    };
    let (Some(cell_a), Some(cell_b)) = (to_cell(pa), to_cell(pb)) else {
        return false;
    };
    if accumulated.get(cell_a.0, cell_a.1) != CellState::Free
        || accumulated.get(cell_b.0, cell_b.1) != CellState::Free
    {
        return false;
    }
    // 4-connected BFS through FREE cells inside the dilated region; half a
    // cell of slack so the rounded sample cells stay inside.
    let bound = off + 0.5 + 1e-9;
    let in_region =
        |x: usize, y: usize| -> bool { (x as f64 - door.cx).abs() <= bound && (y as f64 - door.cy).abs() <= bound };
    if !in_region(cell_a.0, cell_a.1) || !in_region(cell_b.0, cell_b.1) {
        return false;
    }
    let mut queue = std::collections::VecDeque::new();
    let mut seen = std::collections::HashSet::new();
    queue.push_back(cell_a);
    seen.insert(cell_a);
    while let Some((x, y)) = queue.pop_front() {
        if (x, y) == cell_b {
            return true;
        }
        for (dx, dy) in [(0i64, -1i64), (-1, 0), (1, 0), (0, 1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if !accumulated.geometry().contains_cell(nx, ny) {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if !in_region(nx, ny)
                || accumulated.get(nx, ny) != CellState::Free
                || !seen.insert((nx, ny))
            {
                continue;
            }
            queue.push_back((nx, ny));
        }
    }
    false
}

/// Flag rooms containing any measurement pose (cell coordinates, inclusive
/// boundary); visitation propagates across multi-box groups.
pub fn mark_visited(topo: &TopoGraph, measurement_cells: &[(f64, f64)]) -> TopoGraph {
    let mut out = topo.clone();
    for node in &mut out.nodes {
        node.visited = measurement_cells
            .iter()
            .any(|&(x, y)| node.bbox.contains(x, y));
    }
    let visited_groups: Vec<usize> = out
        .nodes
        .iter()
        .filter(|n| n.visited)
        .map(|n| n.group)
        .collect();
    for node in &mut out.nodes {
        if visited_groups.contains(&node.group) {
            node.visited = true;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Planning graph
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NavNodeKind {
    Room { topo: usize },
    Door { topo_edge: usize },
    Robot,
}

#[derive(Clone, Debug, Serialize)]
pub struct NavNode {
    pub id: usize,
    #[serde(flatten)]
    pub kind: NavNodeKind,
    /// Cell coordinates.
    pub position: (f64, f64),
    pub visited: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NavEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NavGraph {
    pub nodes: Vec<NavNode>,
    pub edges: Vec<NavEdge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NavGraph {
    pub fn robot_node(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn room_nodes(&self) -> impl Iterator<Item = &NavNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NavNodeKind::Room { .. }))
    }

    fn push_edge(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (pa, pb) = (self.nodes[a].position, self.nodes[b].position);
        let weight = ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2))
            .sqrt()
            .max(1e-9);
        if self
            .edges
            .iter()
            .any(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
        {
            return;
        }
        self.edges.push(NavEdge { a, b, weight });
    }

    fn build_adjacency(&mut self) {
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            self.adjacency[e.a].push((e.b, e.weight));
            self.adjacency[e.b].push((e.a, e.weight));
        }
    }

    /// Single-source shortest path distances (deterministic tie handling).
    pub fn dijkstra(&self, src: usize) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                // Min-heap by (cost, node id).
                other
                    .0
                    .total_cmp(&self.0)
                    .then(other.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Entry(0.0, src));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry(nd, v));
                }
            }
        }
        dist
    }
}

/// Derive the planning graph: door nodes split door edges, doors sharing a
/// room connect directly, room positions interpolate toward their nearest
/// door by `alpha`, and the robot node attaches to its containing box node
/// plus that node's topological neighbors (nearest node as a fallback when
/// the robot stands inside no active box).
pub fn build_nav(topo: &TopoGraph, robot: (f64, f64), alpha: f64) -> NavGraph {
    let mut nav = NavGraph::default();
    for node in &topo.nodes {
        nav.nodes.push(NavNode {
            id: nav.nodes.len(),
            kind: NavNodeKind::Room { topo: node.id },
            position: node.bbox.center(),
            visited: node.visited,
        });
    }
    // Door nodes; remember which rooms each door touches.
    let mut doors_of_room: Vec<Vec<usize>> = vec![Vec::new(); topo.nodes.len()];
    let mut door_nodes = Vec::new();
    for (edge_idx, edge) in topo.edges.iter().enumerate() {
        if let TopoEdgeKind::Door { door } = &edge.kind {
            let id = nav.nodes.len();
            nav.nodes.push(NavNode {
                id,
                kind: NavNodeKind::Door { topo_edge: edge_idx },
                position: (door.cx, door.cy),
                visited: false,
            });
            doors_of_room[edge.a].push(id);
            doors_of_room[edge.b].push(id);
            door_nodes.push((id, edge.a, edge.b));
        }
    }
    // Pull each room toward its nearest associated door before any weights
    // are computed.
    for (room_idx, node) in topo.nodes.iter().enumerate() {
        let centroid = node.bbox.center();
        let nearest = doors_of_room[room_idx]
            .iter()
            .map(|&d| {
                let p = nav.nodes[d].position;
                let dist2 = (p.0 - centroid.0).powi(2) + (p.1 - centroid.1).powi(2);
                (d, dist2)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((d, _)) = nearest {
            let p = nav.nodes[d].position;
            nav.nodes[room_idx].position = (
                centroid.0 + alpha * (p.0 - centroid.0),
                centroid.1 + alpha * (p.1 - centroid.1),
            );
        }
    }
    // Room-door-room chains and overlap edges.
    for &(door_node, room_a, room_b) in &door_nodes {
        nav.push_edge(room_a, door_node);
        nav.push_edge(door_node, room_b);
    }
    for edge in &topo.edges {
        if matches!(edge.kind, TopoEdgeKind::Overlap) {
            nav.push_edge(edge.a, edge.b);
        }
    }
    // Separate doors in the same room connect directly.
    for doors in &doors_of_room {
        for i in 0..doors.len() {
            for j in (i + 1)..doors.len() {
                nav.push_edge(doors[i], doors[j]);
            }
        }
    }
    // Robot node.
    let robot_id = nav.nodes.len();
    nav.nodes.push(NavNode {
        id: robot_id,
        kind: NavNodeKind::Robot,
        position: robot,
        visited: true,
    });
    let containing: Vec<usize> = topo
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.bbox.contains(robot.0, robot.1))
        .map(|(i, _)| i)
        .collect();
    if containing.is_empty() {
        // Fall back to the nearest node rather than failing.
        let nearest = (0..robot_id)
            .min_by(|&a, &b| {
                let da = dist2(nav.nodes[a].position, robot);
                let db = dist2(nav.nodes[b].position, robot);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("empty graph has no nodes to attach the robot to");
        nav.push_edge(robot_id, nearest);
    } else {
        let mut attach = containing.clone();
        for edge in &topo.edges {
            if containing.contains(&edge.a) && !attach.contains(&edge.b) {
                attach.push(edge.b);
            }
            if containing.contains(&edge.b) && !attach.contains(&edge.a) {
                attach.push(edge.a);
            }
        }
        attach.sort_unstable();
        for t in attach {
            nav.push_edge(robot_id, t);
        }
    }
    nav.build_adjacency();
    nav
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}
