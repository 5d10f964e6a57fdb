//! Goal selection on the planning graph: greedy nearest-unvisited-room and
//! the receding-horizon visit-all tour.

use crate::topograph::{NavGraph, NavNodeKind};

use super::ExploreError;

/// Exact open-path DP is limited to this many targets.
pub const MAX_EXACT_TOUR: usize = 16;

/// Unvisited room nav-nodes reachable from the robot, with their nav ids.
fn unvisited_rooms(nav: &NavGraph, dist_from_robot: &[f64]) -> Vec<usize> {
    nav.room_nodes()
        .filter(|n| !n.visited && dist_from_robot[n.id].is_finite())
        .map(|n| n.id)
        .collect()
}

fn topo_of(nav: &NavGraph, nav_id: usize) -> usize {
    match nav.nodes[nav_id].kind {
        NavNodeKind::Room { topo } => topo,
        _ => unreachable!("goal nodes are room nodes"),
    }
}

/// Closest unvisited room by nav-graph shortest path; ties by node id.
/// None means every reachable room is visited.
pub fn step_greedy(nav: &NavGraph) -> Option<usize> {
    let dist = nav.dijkstra(nav.robot_node());
    unvisited_rooms(nav, &dist)
        .into_iter()
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
        .map(|id| topo_of(nav, id))
}

/// Shortest open path from `start_costs` through every target exactly once
/// (Held-Karp over the metric closure). Returns (cost, visiting order as
/// indices into the target list).
pub fn held_karp_open(start_costs: &[f64], pairwise: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = start_costs.len();
    assert!(n >= 1 && n <= MAX_EXACT_TOUR);
    let full = (1usize << n) - 1;
    let mut dp = vec![vec![f64::INFINITY; n]; 1 << n];
    let mut parent = vec![vec![usize::MAX; n]; 1 << n];
    for j in 0..n {
        dp[1 << j][j] = start_costs[j];
    }
    for mask in 1..=full {
        for j in 0..n {
            if mask & (1 << j) == 0 || !dp[mask][j].is_finite() {
                continue;
            }
            let base = dp[mask][j];
            for k in 0..n {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let cand = base + pairwise[j][k];
                if cand < dp[next][k] {
                    dp[next][k] = cand;
                    parent[next][k] = j;
                }
            }
        }
    }
    let (mut end, mut best) = (0, f64::INFINITY);
    for j in 0..n {
        if dp[full][j] < best {
            best = dp[full][j];
            end = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let (mut mask, mut at) = (full, end);
    while at != usize::MAX {
        order.push(at);
        let prev = parent[mask][at];
        mask &= !(1 << at);
        at = prev;
    }
    order.reverse();
    (best, order)
}

/// Receding-horizon goal: solve the shortest visit-all-unvisited-rooms open
/// path from the robot and return the first room on it.
pub fn step_rh(nav: &NavGraph) -> Result<Option<usize>, ExploreError> {
    let robot_dist = nav.dijkstra(nav.robot_node());
    let targets = unvisited_rooms(nav, &robot_dist);
    match targets.len() {
        0 => return Ok(None),
        1 => return Ok(Some(topo_of(nav, targets[0]))),
        n if n > MAX_EXACT_TOUR => return Err(ExploreError::TooManyRooms(n)),
        _ => {}
    }
    // Metric closure restricted to {robot} ∪ targets.
    let start_costs: Vec<f64> = targets.iter().map(|&t| robot_dist[t]).collect();
    let pairwise: Vec<Vec<f64>> = targets
        .iter()
        .map(|&a| {
            let da = nav.dijkstra(a);
            targets.iter().map(|&b| da[b]).collect()
        })
        .collect();
    let (_, order) = held_karp_open(&start_costs, &pairwise);
    Ok(Some(topo_of(nav, targets[order[0]])))
}
