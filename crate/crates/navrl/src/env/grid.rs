//! Occupancy-grid shortest paths.
//!
//! An 8-connected grid over the arena bounds, Dijkstra with orthogonal cost
//! `resolution` and diagonal cost `sqrt(2) * resolution`. Diagonal moves are
//! disallowed when either orthogonal neighbor is blocked, so paths never cut
//! obstacle corners. The same machinery serves two masters: the SPL
//! denominator (zero inflation, cells blocked only when their center lies
//! strictly inside an obstacle) and the oracle controller (inflated grid
//! that keeps waypoints clear of walls).

use super::Arena;

#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub origin: (f64, f64),
    blocked: Vec<bool>,
}

impl OccupancyGrid {
    pub fn from_arena(arena: &Arena, resolution: f64, inflation: f64) -> Self {
        let b = &arena.bounds;
        let width = ((b.max_x - b.min_x) / resolution).ceil().max(1.0) as usize;
        let height = ((b.max_y - b.min_y) / resolution).ceil().max(1.0) as usize;
        let origin = (b.min_x, b.min_y);
        let mut blocked = vec![false; width * height];
        for j in 0..height {
            for i in 0..width {
                let cx = origin.0 + (i as f64 + 0.5) * resolution;
                let cy = origin.1 + (j as f64 + 0.5) * resolution;
                let mut hit = arena
                    .obstacles
                    .iter()
                    .any(|o| o.expand(inflation).contains_interior(cx, cy));
                if inflation > 0.0 {
                    // Keep the oracle away from the walls as well.
                    hit = hit
                        || cx < b.min_x + inflation
                        || cx > b.max_x - inflation
                        || cy < b.min_y + inflation
                        || cy > b.max_y - inflation;
                }
                blocked[j * width + i] = hit;
            }
        }
        OccupancyGrid { resolution, width, height, origin, blocked }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.blocked[self.index(i, j)]
    }

    /// Cell containing a point, clamped into the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - self.origin.0) / self.resolution).floor() as i64;
        let j = ((y - self.origin.1) / self.resolution).floor() as i64;
        (
            i.clamp(0, self.width as i64 - 1) as usize,
            j.clamp(0, self.height as i64 - 1) as usize,
        )
    }

    pub fn center(&self, cell: (usize, usize)) -> (f64, f64) {
        (
            self.origin.0 + (cell.0 as f64 + 0.5) * self.resolution,
            self.origin.1 + (cell.1 as f64 + 0.5) * self.resolution,
        )
    }

    /// Nearest free cell to the given cell within a small search radius,
    /// scanning rings outward with a deterministic tie order.
    pub fn nearest_free(&self, cell: (usize, usize), max_ring: usize) -> Option<(usize, usize)> {
        if !self.is_blocked(cell.0, cell.1) {
            return Some(cell);
        }
        for ring in 1..=max_ring as i64 {
            for dj in -ring..=ring {
                for di in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    let i = cell.0 as i64 + di;
                    let j = cell.1 as i64 + dj;
                    if i >= 0
                        && j >= 0
                        && (i as usize) < self.width
                        && (j as usize) < self.height
                        && !self.is_blocked(i as usize, j as usize)
                    {
                        return Some((i as usize, j as usize));
                    }
                }
            }
        }
        None
    }
}

/// Distance field and descent pointers produced by Dijkstra from a source.
#[derive(Debug, Clone)]
pub struct DistField {
    pub source: (usize, usize),
    /// Shortest-path cost from the source to every cell; infinity where
    /// disconnected.
    pub dist: Vec<f64>,
    /// For each reached cell, the neighbor one step closer to the source.
    pub toward_source: Vec<Option<(usize, usize)>>,
}

const DIAG: f64 = std::f64::consts::SQRT_2;

pub fn dijkstra(grid: &OccupancyGrid, source: (usize, usize)) -> DistField {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Cost(f64);
    impl Eq for Cost {}
    impl PartialOrd for Cost {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Cost {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }

    let n = grid.width * grid.height;
    let mut dist = vec![f64::INFINITY; n];
    let mut toward = vec![None; n];
    let mut heap: BinaryHeap<(Reverse<Cost>, usize, usize)> = BinaryHeap::new();
    if !grid.is_blocked(source.0, source.1) {
        dist[grid.index(source.0, source.1)] = 0.0;
        heap.push((Reverse(Cost(0.0)), source.0, source.1));
    }
    let moves: [(i64, i64, f64); 8] = [
        (1, 0, 1.0),
        (-1, 0, 1.0),
        (0, 1, 1.0),
        (0, -1, 1.0),
        (1, 1, DIAG),
        (1, -1, DIAG),
        (-1, 1, DIAG),
        (-1, -1, DIAG),
    ];
    while let Some((Reverse(Cost(d)), i, j)) = heap.pop() {
        let idx = grid.index(i, j);
        if d > dist[idx] {
            continue;
        }
        for &(di, dj, w) in &moves {
            let ni = i as i64 + di;
            let nj = j as i64 + dj;
            if ni < 0 || nj < 0 || ni as usize >= grid.width || nj as usize >= grid.height {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            if grid.is_blocked(ni, nj) {
                continue;
            }
            // No corner cutting on diagonals.
            if di != 0 && dj != 0 {
                let a = (i as i64 + di) as usize;
                let b = (j as i64 + dj) as usize;
                if grid.is_blocked(a, j) || grid.is_blocked(i, b) {
                    continue;
                }
            }
            let nd = d + w * grid.resolution;
            let nidx = grid.index(ni, nj);
            if nd < dist[nidx] {
                dist[nidx] = nd;
                toward[nidx] = Some((i, j));
                heap.push((Reverse(Cost(nd)), ni, nj));
            }
        }
    }
    DistField { source, dist, toward_source: toward }
}

impl DistField {
    pub fn distance_at(&self, grid: &OccupancyGrid, cell: (usize, usize)) -> f64 {
        self.dist[grid.index(cell.0, cell.1)]
    }

    /// Walk from a cell toward the source, returning the chain of cell
    /// centers (excluding the starting cell, including the source cell).
    pub fn chain_toward_source(
        &self,
        grid: &OccupancyGrid,
        from: (usize, usize),
    ) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cur = from;
        while let Some(next) = self.toward_source[grid.index(cur.0, cur.1)] {
            out.push(grid.center(next));
            cur = next;
        }
        out
    }
}

/// Shortest grid-path length between two free points; infinity when
/// disconnected. Used for SPL denominators and feasibility checks.
pub fn grid_geodesic(grid: &OccupancyGrid, a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    let ca = grid.nearest_free(grid.cell_of(a.0, a.1), 2)?;
    let cb = grid.nearest_free(grid.cell_of(b.0, b.1), 2)?;
    let field = dijkstra(grid, ca);
    Some(field.distance_at(grid, cb))
}
